"""Measurement instruments: constructs, rating items, response scales, prompts.

An instrument bundles one or more latent constructs with the pool of
third-person rating statements written for them, the ordered response
scale the rater must answer on, and the prompt template that turns a
(text, item) pair into a concrete rating prompt.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import yaml

from .errors import InstrumentError

PLACEHOLDERS = ("{TEXT}", "{RATING_ITEM}", "{RESPONSE_OPTIONS}")

DEFAULT_TEMPLATE_TEXT = """\
Read the following text, then respond to the statement below it:
Start of text
{TEXT}
End of text
Based on this text, how much would you agree with the following statement:
{RATING_ITEM}
Respond with one of the following items:
{RESPONSE_OPTIONS}
"""

DEFAULT_SCALE_LABELS = ("strongly disagree", "disagree", "agree", "strongly agree")

MIN_ITEMS_PER_CONSTRUCT = 3


def normalize_response_text(text: str) -> str:
    """Trim surrounding whitespace/punctuation and lowercase.

    This is the shared normalization applied to scale labels, aliases
    and raw rater responses before any matching.
    """
    return text.strip(string.whitespace + string.punctuation).lower()


@dataclass(frozen=True)
class Construct:
    """A latent variable to be measured, with its expected correlates.

    ``expected_correlates`` maps criterion names to an expected
    correlation sign ("+" or "-"), forming the construct's nomological
    net. At least one entry is required: a construct nobody expects to
    correlate with anything cannot be validated.
    """

    id: str
    name: str
    definition: str
    expected_correlates: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ScaleItem:
    """One third-person rating statement belonging to a construct."""

    id: str
    construct_id: str
    statement: str
    reverse_keyed: bool = False
    original_wording: str | None = None


@dataclass(frozen=True)
class ResponseScale:
    """Ordered response options with integer codes 1..m.

    Parameters
    ----------
    labels : tuple of str
        Response options in printed order; the first label codes as 1.
    aliases : tuple of (str, str)
        Alternative surface strings mapped to canonical labels.
    """

    labels: tuple[str, ...]
    aliases: tuple[tuple[str, str], ...] = ()

    @property
    def codes(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.labels) + 1))

    @property
    def max_code(self) -> int:
        return len(self.labels)

    def code_of(self, label: str) -> int:
        return self.labels.index(label) + 1

    def options_text(self) -> str:
        return ", ".join(self.labels)


@dataclass(frozen=True)
class PromptTemplate:
    """Instruction text with {TEXT}, {RATING_ITEM} and {RESPONSE_OPTIONS} slots."""

    instruction_text: str = DEFAULT_TEMPLATE_TEXT


@dataclass(frozen=True)
class Violation:
    """One instrument validation problem, with where it was found."""

    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


@dataclass(frozen=True)
class Instrument:
    """A validated measurement instrument."""

    constructs: tuple[Construct, ...]
    items: tuple[ScaleItem, ...]
    scale: ResponseScale
    template: PromptTemplate
    source_path: str | None = field(default=None, compare=False)

    def construct_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.constructs)

    def item_ids(self) -> tuple[str, ...]:
        return tuple(i.id for i in self.items)

    def items_of(self, construct_id: str) -> tuple[ScaleItem, ...]:
        return tuple(i for i in self.items if i.construct_id == construct_id)

    def item(self, item_id: str) -> ScaleItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(f"unknown item id: {item_id!r}")

    def construct(self, construct_id: str) -> Construct:
        for c in self.constructs:
            if c.id == construct_id:
                return c
        raise KeyError(f"unknown construct id: {construct_id!r}")

    def structure(self) -> dict[str, str]:
        """Item id -> construct id map (the hypothesized factor structure)."""
        return {i.id: i.construct_id for i in self.items}


def validate_instrument(
    constructs,
    items,
    scale: ResponseScale,
    template: PromptTemplate,
) -> list[Violation]:
    """Check every instrument invariant and report all violations found.

    Returns an empty list iff the instrument is usable. Purely
    report-valued: never raises, never mutates its inputs.
    """
    violations: list[Violation] = []

    seen_cids: set[str] = set()
    for idx, c in enumerate(constructs):
        loc = f"constructs[{idx}]"
        if not c.id:
            violations.append(Violation(loc, "construct id is empty"))
        if c.id in seen_cids:
            violations.append(Violation(loc, f"duplicate construct id {c.id!r}"))
        seen_cids.add(c.id)
        if not c.expected_correlates:
            violations.append(
                Violation(loc, f"construct {c.id!r} declares no expected correlates")
            )
        for cname, sign in c.expected_correlates:
            if sign not in ("+", "-"):
                violations.append(
                    Violation(loc, f"expected correlate {cname!r} has sign {sign!r}, want '+' or '-'")
                )

    seen_iids: set[str] = set()
    per_construct: dict[str, int] = {c.id: 0 for c in constructs}
    for idx, it in enumerate(items):
        loc = f"items[{idx}]"
        if not it.id:
            violations.append(Violation(loc, "item id is empty"))
        if it.id in seen_iids:
            violations.append(Violation(loc, f"duplicate item id {it.id!r}"))
        seen_iids.add(it.id)
        if not it.statement.strip():
            violations.append(Violation(loc, f"item {it.id!r} has an empty statement"))
        if it.construct_id not in per_construct:
            violations.append(
                Violation(loc, f"item {it.id!r} references unknown construct {it.construct_id!r}")
            )
        else:
            per_construct[it.construct_id] += 1

    for cid, count in per_construct.items():
        if count < MIN_ITEMS_PER_CONSTRUCT:
            violations.append(
                Violation(
                    f"construct {cid!r}",
                    f"construct has < {MIN_ITEMS_PER_CONSTRUCT} items ({count}); "
                    "a one-factor model needs at least 3 indicators",
                )
            )

    loc = "response_scale"
    if len(scale.labels) < 2:
        violations.append(Violation(loc, f"scale needs >= 2 labels, got {len(scale.labels)}"))
    normalized = [normalize_response_text(l) for l in scale.labels]
    seen_norm: set[str] = set()
    for label, norm in zip(scale.labels, normalized):
        if norm in seen_norm:
            violations.append(
                Violation(loc, f"duplicate label after normalization: {label!r}")
            )
        seen_norm.add(norm)
        if not norm:
            violations.append(Violation(loc, f"label {label!r} is empty after normalization"))
    for alias, target in scale.aliases:
        if target not in scale.labels:
            violations.append(
                Violation(loc, f"alias {alias!r} points at unknown label {target!r}")
            )

    loc = "template"
    for ph in PLACEHOLDERS:
        n = template.instruction_text.count(ph)
        if n == 0:
            violations.append(Violation(loc, f"missing placeholder {ph}"))
        elif n > 1:
            violations.append(Violation(loc, f"placeholder {ph} appears {n} times, want exactly 1"))

    return violations


def render_prompt(
    template: PromptTemplate,
    item: ScaleItem,
    text: str,
    scale: ResponseScale,
) -> str:
    """Fill the template slots for one (item, text) pair.

    Pure function: identical inputs produce byte-identical output. The
    response options are the scale labels joined with ", " in scale
    order.
    """
    out = template.instruction_text
    out = out.replace("{TEXT}", text)
    out = out.replace("{RATING_ITEM}", item.statement)
    out = out.replace("{RESPONSE_OPTIONS}", scale.options_text())
    return out


def _parse_scale_spec(doc: dict, path: str | None):
    constructs = []
    for raw in doc.get("constructs", []):
        correlates = tuple(
            (str(ec["criterion"]), str(ec["sign"]))
            for ec in raw.get("expected_correlates", [])
        )
        constructs.append(
            Construct(
                id=str(raw.get("id", "")),
                name=str(raw.get("name", raw.get("id", ""))),
                definition=str(raw.get("definition", "")),
                expected_correlates=correlates,
            )
        )

    items = []
    for raw in doc.get("items", []):
        items.append(
            ScaleItem(
                id=str(raw.get("id", "")),
                construct_id=str(raw.get("construct", "")),
                statement=str(raw.get("statement", "")),
                reverse_keyed=bool(raw.get("reverse_keyed", False)),
                original_wording=raw.get("original_wording"),
            )
        )

    scale_doc = doc.get("response_scale") or {}
    labels = tuple(str(l) for l in scale_doc.get("labels", DEFAULT_SCALE_LABELS))
    aliases = tuple(
        (str(a), str(t)) for a, t in (scale_doc.get("aliases") or {}).items()
    )
    scale = ResponseScale(labels=labels, aliases=aliases)

    template = PromptTemplate(instruction_text=str(doc.get("template", DEFAULT_TEMPLATE_TEXT)))
    return constructs, items, scale, template


def load_scale_spec(path: str) -> Instrument:
    """Load and validate an instrument from a YAML scale-spec file.

    Raises
    ------
    InstrumentError
        If the file does not parse or any invariant is violated. The
        exception lists every violation with its location.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise InstrumentError([Violation(str(path), f"parse failure: {exc}")]) from exc
    if not isinstance(doc, dict):
        raise InstrumentError([Violation(str(path), "top level must be a mapping")])

    constructs, items, scale, template = _parse_scale_spec(doc, path)
    violations = validate_instrument(constructs, items, scale, template)
    if violations:
        raise InstrumentError(violations)
    return Instrument(
        constructs=tuple(constructs),
        items=tuple(items),
        scale=scale,
        template=template,
        source_path=str(path),
    )
