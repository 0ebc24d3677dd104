"""Pipeline stages: validate, simulate, score, reliability, validity, report.

Each stage reads only the run configuration and artifacts persisted by
earlier stages, writes its own artifacts into the output directory, and
is independently rerunnable. Artifacts contain no timestamps or call
counters, so a rerun with the same config, seed and warm cache
reproduces every byte.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import cfa as cfa_mod
from .config import RunConfig
from .corpus import load_corpus, write_corpus
from .errors import ArtifactMissingError, PsytextError
from .instrument import Instrument, load_scale_spec, render_prompt
from .raters import (
    STATUS_OK,
    STATUS_PARSE_FAILED,
    STATUS_PROVIDER_ERROR,
    HttpChatProvider,
    ResponseCache,
    RetryPolicy,
    SimulatedRaterProvider,
    SimulatedRaterSpec,
    batch_score,
)
from .ratings import (
    RatingMatrix,
    SplitSpec,
    apply_keying,
    assemble_matrix,
    covariance,
    read_wide_csv,
    split_holdout,
    write_long_jsonl,
    write_wide_csv,
)
from .reliability import (
    ReliabilityReport,
    FactorReliability,
    cronbach_alpha,
    item_diagnostics,
    mcdonald_omega,
)
from .retention import kaiser_rule, parallel_analysis
from .seeding import derive_seed
from .simulate import generate_study, read_latent_scores, write_latent_scores
from .validity import (
    aggregate_scores,
    load_criteria,
    validity_correlations,
    write_criteria,
)
from .exploratory import efa

log = logging.getLogger(__name__)

LOW_OMEGA_BANNER = 0.5

ART_RECORDS = "records.jsonl"
ART_MATRIX_RAW = "matrix_raw.csv"
ART_MATRIX_KEYED = "matrix_keyed.csv"
ART_DEVELOPMENT = "development.csv"
ART_HOLDOUT = "holdout.csv"
ART_SPLIT = "split_manifest.json"
ART_SCORING = "scoring_summary.json"
ART_RETENTION = "retention.json"
ART_EFA = "efa_model.json"
ART_CFA = "cfa_fit.json"
ART_RELIABILITY = "reliability_report.json"
ART_SCORES = "scores.csv"
ART_VALIDITY = "validity_report.json"
ART_REPORT_MD = "report.md"
ART_REPORT_JSON = "report.json"
ART_SCREE = "scree.csv"
ART_LOADINGS = "loadings.csv"
ART_VALIDITY_TABLE = "validity_table.csv"

SIM_DIR = "simulated"
SIM_CORPUS = "corpus.jsonl"
SIM_LATENT = "latent_scores.csv"
SIM_CRITERIA = "criteria.csv"
SIM_CRITERIA_META = "criteria_meta.yaml"


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def _read_json(path: str, stage_hint: str):
    if not os.path.exists(path):
        raise ArtifactMissingError(
            f"missing artifact {os.path.basename(path)!r}; run the {stage_hint} stage first"
        )
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _artifact(config: RunConfig, name: str) -> str:
    return os.path.join(config.output, name)


# ---------------------------------------------------------------------------
# validate


@dataclass
class ValidationSummary:
    ok: bool
    messages: list[str]


def stage_validate(config: RunConfig) -> ValidationSummary:
    """Check instrument, corpus and criteria; collect every problem found."""
    messages: list[str] = []
    ok = True

    try:
        instrument = load_scale_spec(config.instrument)
        messages.append(
            f"instrument: {len(instrument.constructs)} constructs, "
            f"{len(instrument.items)} items, {instrument.scale.max_code}-point scale"
        )
    except PsytextError as exc:
        ok = False
        instrument = None
        messages.append(f"instrument: INVALID: {exc}")

    corpus_path = config.corpus
    if os.path.exists(corpus_path):
        try:
            corpus = load_corpus(corpus_path)
            messages.append(f"corpus: {len(corpus)} texts")
        except PsytextError as exc:
            ok = False
            messages.append(f"corpus: INVALID: {exc}")
    elif config.simulation is not None:
        messages.append("corpus: not present yet (will be generated by the simulate stage)")
    else:
        ok = False
        messages.append(f"corpus: missing file {corpus_path}")

    if config.criteria is not None:
        if os.path.exists(config.criteria):
            try:
                criteria = load_criteria(config.criteria, config.criteria_meta)
                messages.append(f"criteria: {len(criteria)} series")
            except Exception as exc:
                ok = False
                messages.append(f"criteria: INVALID: {exc}")
        elif config.simulation is not None:
            messages.append("criteria: not present yet (will be generated by the simulate stage)")
        else:
            ok = False
            messages.append(f"criteria: missing file {config.criteria}")

    return ValidationSummary(ok=ok, messages=messages)


# ---------------------------------------------------------------------------
# providers


def _rater_spec(config: RunConfig, instrument: Instrument) -> SimulatedRaterSpec:
    sim = config.simulation
    if sim is None:
        raise PsytextError("provider.kind is 'simulated' but the config has no simulation section")
    return SimulatedRaterSpec.for_instrument(
        instrument,
        loading=sim.loading,
        residual=sim.residual,
        seed=derive_seed(config.master_seed, "simulate.rater") % (2**31),
        loading_overrides=sim.loading_overrides,
    )


def build_provider(config: RunConfig, instrument: Instrument):
    if config.provider.kind == "http":
        return HttpChatProvider(
            base_url=config.provider.base_url,
            model_id=config.provider.model_id,
            temperature=config.provider.temperature,
            api_key_env=config.provider.api_key_env,
            timeout=config.provider.timeout,
        )
    latent_path = os.path.join(config.output, SIM_DIR, SIM_LATENT)
    if not os.path.exists(latent_path):
        raise ArtifactMissingError(
            f"missing artifact {SIM_LATENT!r}; run the simulate stage first"
        )
    latent = read_latent_scores(latent_path)
    return SimulatedRaterProvider(
        _rater_spec(config, instrument), latent, instrument.scale
    )


# ---------------------------------------------------------------------------
# score


@dataclass
class ScoreResult:
    n_records: int
    counts: dict[str, int]
    provider_calls: int
    n_development: int
    n_holdout: int


def _score_and_persist(config: RunConfig, instrument: Instrument, corpus, provider) -> ScoreResult:
    cache = ResponseCache(config.cache)
    retry = RetryPolicy(
        max_attempts=config.provider.retry_max,
        backoff_base=config.provider.backoff_base,
    )
    records = batch_score(
        instrument,
        corpus,
        provider,
        cache=cache,
        concurrency_limit=config.provider.concurrency,
        retry=retry,
        sample_count=config.provider.sample_count,
    )

    matrix = assemble_matrix(records, instrument)
    keyed = apply_keying(matrix, instrument)
    split = SplitSpec(
        holdout_fraction=config.holdout_fraction,
        seed=derive_seed(config.master_seed, "split") % (2**31),
    )
    development, holdout = split_holdout(keyed, split)

    os.makedirs(config.output, exist_ok=True)
    write_long_jsonl(records, _artifact(config, ART_RECORDS))
    write_wide_csv(matrix, _artifact(config, ART_MATRIX_RAW))
    write_wide_csv(keyed, _artifact(config, ART_MATRIX_KEYED))
    write_wide_csv(development, _artifact(config, ART_DEVELOPMENT))
    write_wide_csv(holdout, _artifact(config, ART_HOLDOUT))

    counts = {STATUS_OK: 0, STATUS_PARSE_FAILED: 0, STATUS_PROVIDER_ERROR: 0}
    for rec in records:
        counts[rec.status] += 1

    _write_json(
        _artifact(config, ART_SPLIT),
        {
            "holdout_fraction": config.holdout_fraction,
            "seed": split.seed,
            "development": list(development.text_ids),
            "holdout": list(holdout.text_ids),
        },
    )
    _write_json(
        _artifact(config, ART_SCORING),
        {
            "model_id": provider.model_id,
            "n_texts": len(corpus),
            "n_items": len(instrument.items),
            "counts": counts,
            "n_development": development.n_texts,
            "n_holdout": holdout.n_texts,
        },
    )
    return ScoreResult(
        n_records=len(records),
        counts=counts,
        provider_calls=getattr(provider, "call_count", 0),
        n_development=development.n_texts,
        n_holdout=holdout.n_texts,
    )


def stage_score(config: RunConfig) -> ScoreResult:
    """Rate the corpus and persist records, matrices and the split."""
    instrument = load_scale_spec(config.instrument)
    if not os.path.exists(config.corpus):
        if config.simulation is not None:
            raise ArtifactMissingError(
                f"corpus {config.corpus} does not exist; run the simulate stage first"
            )
        raise PsytextError(f"corpus file not found: {config.corpus}")
    corpus = load_corpus(config.corpus)
    provider = build_provider(config, instrument)
    return _score_and_persist(config, instrument, corpus, provider)


# ---------------------------------------------------------------------------
# simulate


def stage_simulate(config: RunConfig) -> ScoreResult:
    """Generate the synthetic study bundle and score it.

    Writes the synthetic corpus, latent factor scores and criterion
    into output/simulated/, then runs the scoring stage against the
    simulated rater so the bundle is immediately analysis-ready.
    """
    if config.simulation is None:
        raise PsytextError("config has no simulation section")
    instrument = load_scale_spec(config.instrument)
    bundle = generate_study(instrument, config.simulation, config.master_seed)

    sim_dir = os.path.join(config.output, SIM_DIR)
    os.makedirs(sim_dir, exist_ok=True)
    write_corpus(os.path.join(sim_dir, SIM_CORPUS), bundle.corpus)
    write_latent_scores(
        os.path.join(sim_dir, SIM_LATENT), bundle.latent_scores, bundle.factor_ids
    )
    write_criteria(
        os.path.join(sim_dir, SIM_CRITERIA),
        [bundle.criterion],
        os.path.join(sim_dir, SIM_CRITERIA_META),
    )

    provider = SimulatedRaterProvider(
        _rater_spec(config, instrument), bundle.latent_scores, instrument.scale
    )
    return _score_and_persist(config, instrument, bundle.corpus, provider)


# ---------------------------------------------------------------------------
# reliability


def stage_reliability(config: RunConfig) -> ReliabilityReport:
    """Retention + EFA on the development split; CFA, alpha, omega and
    item diagnostics on the holdout split."""
    instrument = load_scale_spec(config.instrument)
    for name in (ART_DEVELOPMENT, ART_HOLDOUT):
        if not os.path.exists(_artifact(config, name)):
            raise ArtifactMissingError(
                f"missing artifact {name!r}; run the score (or simulate) stage first"
            )
    m = instrument.scale.max_code
    development = read_wide_csv(_artifact(config, ART_DEVELOPMENT), m)
    holdout = read_wide_csv(_artifact(config, ART_HOLDOUT), m)
    decisions: list[str] = []

    # -- development: how many factors, what loads where
    if config.analysis.retention == "kaiser":
        retention = kaiser_rule(development)
    else:
        retention = parallel_analysis(
            development,
            n_reps=config.analysis.parallel_reps,
            seed=derive_seed(config.master_seed, "parallel") % (2**31),
        )
    expected_q = len(instrument.constructs)
    if retention.retained != expected_q:
        decisions.append(
            f"retention: {retention.rule} retained {retention.retained} factors; "
            f"instrument declares {expected_q}"
        )

    dev_cov = covariance(development, policy=config.analysis.missing_policy)
    for item in dev_cov.zero_variance_items:
        decisions.append(f"development: zero-variance item {item} excluded from correlation")
    q_efa = max(1, retention.retained)
    if q_efa >= len(dev_cov.included_item_ids):
        q_efa = len(dev_cov.included_item_ids) - 1
        decisions.append(f"efa: retained count capped at k - 1 = {q_efa}")
    efa_model = efa(
        dev_cov.corr,
        q_efa,
        method=config.analysis.extraction,
        rotation=config.analysis.rotation,
        item_ids=dev_cov.included_item_ids,
    )

    # -- holdout: confirmatory fit of the declared structure
    hold_cov = covariance(holdout, policy=config.analysis.missing_policy)
    for item in hold_cov.zero_variance_items:
        decisions.append(f"holdout: zero-variance item {item} excluded from analysis")
    included = hold_cov.included_item_ids
    structure = {i: f for i, f in instrument.structure().items() if i in included}
    spec = cfa_mod.CFAModelSpec(structure=structure, correlated=True)
    S = hold_cov.included_cov()
    order = [included.index(i) for i in spec.item_ids]
    S = S[np.ix_(order, order)]
    fit = cfa_mod.cfa_fit(S, spec, n=hold_cov.n_effective)
    fit = cfa_mod.with_fit_indices(fit, S, hold_cov.n_effective)
    if not fit.converged:
        decisions.append(
            f"cfa: not converged in {fit.iterations} iterations "
            f"(projected gradient {fit.gradient_norm:.3e})"
        )
    for item in fit.bound_active:
        decisions.append(f"cfa: residual variance of {item} at lower bound (Heywood handling)")
    if fit.df == 0:
        decisions.append("cfa: model is saturated (df = 0); fit indices undefined")

    # -- per-factor reliability on the holdout split
    diags = item_diagnostics(
        holdout, instrument, fit.model, loading_cutoff=config.analysis.loading_cutoff
    )
    diag_by_factor: dict[str, list] = {}
    for d in diags:
        diag_by_factor.setdefault(d.factor_id, []).append(d)
    factors = []
    for factor_id in fit.model.factor_ids:
        f_items = [i for i in spec.item_ids if structure[i] == factor_id]
        idx = [spec.item_ids.index(i) for i in f_items]
        alpha = cronbach_alpha(S, idx) if len(idx) >= 2 else None
        if alpha is None:
            decisions.append(f"alpha: factor {factor_id} has < 2 items; alpha undefined")
        omega = mcdonald_omega(fit.model, factor_id)
        factors.append(
            FactorReliability(
                factor_id=factor_id,
                alpha=alpha,
                omega=omega,
                items=tuple(diag_by_factor.get(factor_id, ())),
            )
        )
    report = ReliabilityReport(
        factors=tuple(factors),
        retained_factor_count=retention.retained,
        loading_cutoff=config.analysis.loading_cutoff,
    )
    for item in report.flagged_items():
        decisions.append(
            f"diagnostics: item {item} flagged "
            f"(|own-factor loading| < {config.analysis.loading_cutoff})"
        )

    _write_json(_artifact(config, ART_RETENTION), retention.to_dict())
    _write_json(_artifact(config, ART_EFA), efa_model.to_dict())
    _write_json(_artifact(config, ART_CFA), fit.to_dict())
    _write_json(
        _artifact(config, ART_RELIABILITY),
        {**report.to_dict(), "decisions": decisions},
    )
    return report


# ---------------------------------------------------------------------------
# validity


def stage_validity(config: RunConfig) -> dict:
    """Aggregate scores per factor and correlate with external criteria.

    Refuses to run before the reliability stage: correlating scores
    nobody has shown to measure anything puts validity before
    reliability, which is the order this pipeline exists to enforce.
    """
    reliability_doc = _read_json(_artifact(config, ART_RELIABILITY), "reliability")
    instrument = load_scale_spec(config.instrument)
    if config.criteria is None:
        raise PsytextError("config declares no criteria file")
    criteria = load_criteria(config.criteria, config.criteria_meta)
    keyed = read_wide_csv(_artifact(config, ART_MATRIX_KEYED), instrument.scale.max_code)

    omegas = {f["factor_id"]: f["omega"] for f in reliability_doc["factors"]}
    decisions: list[str] = []
    for factor_id, omega in sorted(omegas.items()):
        if omega < LOW_OMEGA_BANNER:
            banner = (
                f"WARNING: factor {factor_id} has omega = {omega:.3f} < {LOW_OMEGA_BANNER}; "
                "its validity correlations are attenuated and hard to interpret"
            )
            log.warning(banner)
            decisions.append(banner)

    all_scores: dict[str, dict[str, float]] = {}
    entries = []
    skipped = []
    for construct in instrument.constructs:
        scores = aggregate_scores(keyed, instrument, construct.id)
        all_scores[construct.id] = scores
        expected = dict(construct.expected_correlates)
        report = validity_correlations(
            scores,
            criteria,
            factor_id=construct.id,
            expected_signs=expected,
            score_reliability=omegas.get(construct.id),
        )
        entries.extend(report.entries)
        skipped.extend((construct.id, c, reason) for c, reason in report.skipped)
        for c, reason in report.skipped:
            decisions.append(f"validity: criterion {c} skipped for {construct.id}: {reason}")
        for e in report.entries:
            if e.disattenuation_out_of_range:
                decisions.append(
                    f"validity: disattenuated r for ({e.factor_id}, {e.criterion}) "
                    f"out of range ({e.r_disattenuated:.3f}); reliabilities look misspecified"
                )

    # scores.csv: one row per text, one column per construct
    text_ids = sorted({t for s in all_scores.values() for t in s})
    with open(_artifact(config, ART_SCORES), "w", encoding="utf-8", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh, lineterminator="\n")
        ids = [c.id for c in instrument.constructs]
        writer.writerow(["text_id", *ids])
        for tid in text_ids:
            row = [tid]
            for cid in ids:
                v = all_scores[cid].get(tid)
                row.append("" if v is None else repr(float(v)))
            writer.writerow(row)

    doc = {
        "entries": [e.to_dict() for e in entries],
        "skipped": [list(s) for s in skipped],
        "score_reliabilities": omegas,
        "decisions": decisions,
    }
    _write_json(_artifact(config, ART_VALIDITY), doc)
    return doc


# ---------------------------------------------------------------------------
# report


def _fmt(v, digits=4) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, float) and (v != v):  # NaN
        return "undefined"
    if isinstance(v, float):
        return f"{v:.{digits}f}"
    return str(v)


def stage_report(config: RunConfig) -> str:
    """Merge all persisted artifacts into one Markdown + JSON report.

    Hard-errors on any missing artifact, naming it; never recomputes.
    Returns the Markdown path.
    """
    instrument = load_scale_spec(config.instrument)
    scoring = _read_json(_artifact(config, ART_SCORING), "score")
    split = _read_json(_artifact(config, ART_SPLIT), "score")
    retention = _read_json(_artifact(config, ART_RETENTION), "reliability")
    efa_doc = _read_json(_artifact(config, ART_EFA), "reliability")
    cfa_doc = _read_json(_artifact(config, ART_CFA), "reliability")
    reliability_doc = _read_json(_artifact(config, ART_RELIABILITY), "reliability")
    validity_doc = None
    if config.criteria is not None:
        validity_doc = _read_json(_artifact(config, ART_VALIDITY), "validity")

    decisions = list(reliability_doc.get("decisions", []))
    if validity_doc:
        decisions += list(validity_doc.get("decisions", []))

    lines: list[str] = []
    lines.append("# Measurement run report")
    lines.append("")

    lines.append("## 1. Target of measurement")
    lines.append("")
    for c in instrument.constructs:
        correlates = ", ".join(f"{name} ({sign})" for name, sign in c.expected_correlates)
        lines.append(f"- **{c.name}** (`{c.id}`): {c.definition.strip()}")
        lines.append(f"  - expected correlates: {correlates}")
    lines.append("")

    lines.append("## 2. Rating prompt pool")
    lines.append("")
    lines.append(
        f"{len(instrument.items)} rating items over {len(instrument.constructs)} constructs; "
        f"{instrument.scale.max_code}-point response scale: {instrument.scale.options_text()}."
    )
    lines.append("")
    lines.append("| item | construct | reverse keyed | statement |")
    lines.append("|---|---|---|---|")
    for it in instrument.items:
        lines.append(
            f"| {it.id} | {it.construct_id} | {'yes' if it.reverse_keyed else 'no'} "
            f"| {it.statement} |"
        )
    lines.append("")
    example = render_prompt(
        instrument.template, instrument.items[0], "<corpus text goes here>", instrument.scale
    )
    lines.append("Example rendered prompt:")
    lines.append("")
    lines.append("```")
    lines.append(example.rstrip("\n"))
    lines.append("```")
    lines.append("")

    lines.append("## 3. Scoring")
    lines.append("")
    counts = scoring["counts"]
    lines.append(
        f"- {scoring['n_texts']} texts x {scoring['n_items']} items rated by `{scoring['model_id']}`"
    )
    lines.append(
        f"- status counts: {counts[STATUS_OK]} ok, {counts[STATUS_PARSE_FAILED]} parse_failed, "
        f"{counts[STATUS_PROVIDER_ERROR]} provider_error"
    )
    lines.append(
        f"- split: {scoring['n_development']} development / {scoring['n_holdout']} holdout "
        f"(fraction {split['holdout_fraction']}, seed {split['seed']})"
    )
    lines.append("")

    lines.append("## 4. Factor structure")
    lines.append("")
    lines.append(
        f"- retention rule `{retention['rule']}` on the development split retained "
        f"**{retention['retained']}** factors "
        f"(instrument declares {len(instrument.constructs)})"
    )
    lines.append("")
    lines.append("| rank | observed eigenvalue | reference mean |")
    lines.append("|---|---|---|")
    refs = retention.get("reference_eigenvalues") or []
    for i, ev in enumerate(retention["observed_eigenvalues"]):
        ref = _fmt(refs[i]) if i < len(refs) else ""
        lines.append(f"| {i + 1} | {_fmt(ev)} | {ref} |")
    lines.append("")
    lines.append("Development-split exploratory loadings (pattern matrix):")
    lines.append("")
    lines.append("| item | " + " | ".join(efa_doc["factor_ids"]) + " |")
    lines.append("|---" * (1 + len(efa_doc["factor_ids"])) + "|")
    for item, row in zip(efa_doc["item_ids"], efa_doc["loadings"]):
        lines.append(f"| {item} | " + " | ".join(_fmt(v) for v in row) + " |")
    lines.append("")
    fi = cfa_doc["fit_indices"] or {}
    lines.append(
        f"Holdout confirmatory fit: chi2 = {_fmt(cfa_doc['chi_square'])} "
        f"(df = {cfa_doc['df']}, n = {cfa_doc['n']}), "
        f"F = {_fmt(cfa_doc['discrepancy'], 6)}, "
        f"converged = {cfa_doc['converged']}"
    )
    lines.append("")
    lines.append("| RMSEA | CFI | TLI | SRMR |")
    lines.append("|---|---|---|---|")
    lines.append(
        f"| {_fmt(fi.get('rmsea'))} | {_fmt(fi.get('cfi'))} "
        f"| {_fmt(fi.get('tli'))} | {_fmt(fi.get('srmr'))} |"
    )
    lines.append("")

    lines.append("## 5. Internal consistency")
    lines.append("")
    lines.append("| factor | alpha | omega |")
    lines.append("|---|---|---|")
    for f in reliability_doc["factors"]:
        lines.append(f"| {f['factor_id']} | {_fmt(f['alpha'])} | {_fmt(f['omega'])} |")
    lines.append("")
    lines.append("| item | factor | own loading | corrected item-total r | flagged |")
    lines.append("|---|---|---|---|---|")
    for f in reliability_doc["factors"]:
        for d in f["items"]:
            lines.append(
                f"| {d['item_id']} | {d['factor_id']} | {_fmt(d['own_loading'])} "
                f"| {_fmt(d['item_total_r'])} | {'yes' if d['flagged'] else 'no'} |"
            )
    lines.append("")

    lines.append("## 6. Validity")
    lines.append("")
    if validity_doc is None:
        lines.append("No criteria configured for this run.")
    else:
        lines.append(
            "| factor | criterion | n | r (raw) | r (disattenuated) | expected sign | consistent |"
        )
        lines.append("|---|---|---|---|---|---|---|")
        for e in validity_doc["entries"]:
            consistent = "" if e["sign_consistent"] is None else ("yes" if e["sign_consistent"] else "NO")
            lines.append(
                f"| {e['factor_id']} | {e['criterion']} | {e['n_overlap']} "
                f"| {_fmt(e['r_raw'])} | {_fmt(e['r_disattenuated'])} "
                f"| {e['expected_sign'] or ''} | {consistent} |"
            )
    lines.append("")

    lines.append("## 7. Repetition")
    lines.append("")
    lines.append(
        "Validation is not a one-off: rerun this pipeline with a new corpus, new criteria "
        "and a fresh output directory to replicate the measure on new data. "
        f"This run used master seed **{config.master_seed}**; identical config, seed and "
        "cache reproduce this report byte for byte."
    )
    lines.append("")
    lines.append("### Decisions log")
    lines.append("")
    if decisions:
        for d in decisions:
            lines.append(f"- {d}")
    else:
        lines.append("- none: every stage ran with default behavior")
    lines.append("")
    lines.append("### Config echo")
    lines.append("")
    lines.append("```json")
    lines.append(json.dumps(config.echo(), sort_keys=True, indent=2))
    lines.append("```")

    md_path = _artifact(config, ART_REPORT_MD)
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    _write_json(
        _artifact(config, ART_REPORT_JSON),
        {
            "config": config.echo(),
            "scoring": scoring,
            "split": split,
            "retention": retention,
            "efa": efa_doc,
            "cfa": cfa_doc,
            "reliability": reliability_doc,
            "validity": validity_doc,
            "decisions": decisions,
        },
    )

    # plain CSV tables for plotting
    import csv as _csv

    with open(_artifact(config, ART_SCREE), "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "observed_eigenvalue", "reference_mean"])
        for i, ev in enumerate(retention["observed_eigenvalues"]):
            ref = refs[i] if i < len(refs) else ""
            writer.writerow([i + 1, repr(ev), repr(ref) if ref != "" else ""])

    with open(_artifact(config, ART_LOADINGS), "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "source", *cfa_doc["model"]["factor_ids"]])
        for item, row in zip(cfa_doc["model"]["item_ids"], cfa_doc["model"]["loadings"]):
            writer.writerow([item, "cfa_holdout", *[repr(v) for v in row]])
        for item, row in zip(efa_doc["item_ids"], efa_doc["loadings"]):
            writer.writerow([item, "efa_development", *[repr(v) for v in row]])

    if validity_doc is not None:
        with open(_artifact(config, ART_VALIDITY_TABLE), "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["factor_id", "criterion", "n_overlap", "r_raw", "r_disattenuated",
                 "expected_sign", "sign_consistent"]
            )
            for e in validity_doc["entries"]:
                writer.writerow(
                    [
                        e["factor_id"], e["criterion"], e["n_overlap"], repr(e["r_raw"]),
                        "" if e["r_disattenuated"] is None else repr(e["r_disattenuated"]),
                        e["expected_sign"] or "",
                        "" if e["sign_consistent"] is None else str(e["sign_consistent"]).lower(),
                    ]
                )

    return md_path
