"""Rating providers: turn rendered prompts into parsed Likert codes.

Two providers are included. ``HttpChatProvider`` talks to a
chat-completion style HTTP endpoint; ``SimulatedRaterProvider`` draws
deterministic responses from a latent-variable model and exists so the
whole pipeline can be exercised and tested without any network. Both
sit behind the same ``complete()`` call used by ``score_one`` and
``batch_score``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import requests
from scipy.stats import norm

from .corpus import TextRecord
from .errors import ParseAmbiguityError, ParseFailure, ProviderError
from .instrument import Instrument, ResponseScale, normalize_response_text, render_prompt

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_PARSE_FAILED = "parse_failed"
STATUS_PROVIDER_ERROR = "provider_error"


@dataclass(frozen=True)
class RatingRecord:
    """One rating of one text on one item.

    ``parsed_code`` is set iff ``status == "ok"``; it is an integer code
    in [1, m] except when multi-sample averaging is enabled, in which
    case it is the mean of the sample codes (still within [1, m]).
    """

    text_id: str
    item_id: str
    model_id: str
    prompt_hash: str
    raw_response: str
    parsed_code: float | None
    status: str
    attempt_count: int

    def to_dict(self) -> dict:
        return {
            "text_id": self.text_id,
            "item_id": self.item_id,
            "model_id": self.model_id,
            "prompt_hash": self.prompt_hash,
            "raw_response": self.raw_response,
            "parsed_code": self.parsed_code,
            "status": self.status,
            "attempt_count": self.attempt_count,
        }


@dataclass(frozen=True)
class RetryPolicy:
    """Attempt budget per (text, item) rating; backoff applies to transport errors."""

    max_attempts: int = 2
    backoff_base: float = 0.5

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (2 ** (attempt - 1))


def prompt_digest(model_id: str, prompt: str) -> str:
    """256-bit cache key over (model id, rendered prompt)."""
    h = hashlib.sha256()
    h.update(model_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(prompt.encode("utf-8"))
    return h.hexdigest()


def parse_response(raw: str, scale: ResponseScale) -> int:
    """Map a raw rater response to its scale code.

    The matching pipeline is: normalize (trim whitespace/punctuation,
    lowercase), then try in order an exact label match, an alias match,
    and a substring scan. In the substring scan a label occurrence that
    lies strictly inside another label's occurrence does not count (so
    the "agree" inside "strongly agree" is not a second candidate), and
    the scan fails unless exactly one distinct label survives.

    Raises
    ------
    ParseFailure
        No label matched.
    ParseAmbiguityError
        Two or more distinct labels matched in the substring scan.
    """
    norm_raw = normalize_response_text(raw)
    norm_labels = {normalize_response_text(l): l for l in scale.labels}

    if norm_raw in norm_labels:
        return scale.code_of(norm_labels[norm_raw])

    for alias, target in scale.aliases:
        if norm_raw == normalize_response_text(alias):
            return scale.code_of(target)

    # Substring scan with occlusion: collect every occurrence of every
    # label (and alias) surface form, then drop occurrences strictly
    # contained in a longer occurrence of a different label.
    spans: list[tuple[int, int, str]] = []  # (start, end, canonical label)
    surfaces = [(normalize_response_text(l), l) for l in scale.labels]
    surfaces += [(normalize_response_text(a), t) for a, t in scale.aliases]
    for surface, label in surfaces:
        if not surface:
            continue
        start = 0
        while True:
            pos = norm_raw.find(surface, start)
            if pos < 0:
                break
            spans.append((pos, pos + len(surface), label))
            start = pos + 1

    survivors: set[str] = set()
    for s, e, label in spans:
        occluded = any(
            (s2 <= s and e <= e2 and (e2 - s2) > (e - s) and label2 != label)
            for s2, e2, label2 in spans
        )
        if not occluded:
            survivors.add(label)

    if len(survivors) == 1:
        return scale.code_of(next(iter(survivors)))
    if len(survivors) > 1:
        matched = sorted(survivors, key=scale.code_of)
        raise ParseAmbiguityError(f"response matches multiple labels: {matched}")
    raise ParseFailure(f"response matches no scale label: {raw!r}")


class HttpChatProvider:
    """Chat-completion HTTP provider.

    Sends one user message per prompt and reads the first choice's
    message content as the raw response. The API key is read from an
    environment variable at call time and never logged or persisted.
    """

    def __init__(
        self,
        base_url: str,
        model_id: str,
        temperature: float = 0.0,
        api_key_env: str = "PSYTEXT_API_KEY",
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.temperature = temperature
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.call_count = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, *, text_id: str, item_id: str, attempt: int) -> str:
        with self._lock:
            self.call_count += 1
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc


def equal_probability_thresholds(n_categories: int) -> tuple[float, ...]:
    """Standard-normal cut points giving equal category probabilities."""
    ps = np.arange(1, n_categories) / n_categories
    return tuple(float(t) for t in norm.ppf(ps))


@dataclass(frozen=True)
class SimulatedRaterSpec:
    """Latent-variable model behind the simulated rater.

    Each item i measures one factor with loading ``loadings[i]`` and
    residual variance ``residuals[i]``; a response to (text t, item i)
    discretizes y = loading * theta + sqrt(residual) * eps by
    ``thresholds``. eps is seeded by (seed, text_id, item_id, attempt),
    so responses are a pure function of those four values.
    """

    loadings: dict[str, float]
    residuals: dict[str, float]
    item_factor: dict[str, str]
    thresholds: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if list(self.thresholds) != sorted(self.thresholds) or len(set(self.thresholds)) != len(
            self.thresholds
        ):
            raise ValueError("thresholds must be strictly increasing")
        for iid, lam in self.loadings.items():
            if not -1.0 <= lam <= 1.0:
                raise ValueError(f"loading for {iid!r} outside [-1, 1]: {lam}")
            psi = self.residuals[iid]
            if psi < 0:
                raise ValueError(f"residual variance for {iid!r} negative: {psi}")
            if abs(lam * lam + psi - 1.0) > 0.5:
                log.warning(
                    "item %s: loading^2 + residual = %.3f deviates from 1 by > 0.5",
                    iid,
                    lam * lam + psi,
                )

    @staticmethod
    def for_instrument(
        instrument: Instrument,
        loading: float = 0.8,
        residual: float | None = None,
        thresholds: tuple[float, ...] | None = None,
        seed: int = 0,
        loading_overrides: dict[str, float] | None = None,
    ) -> "SimulatedRaterSpec":
        """Uniform-loading spec over an instrument's items.

        ``residual`` defaults to 1 - loading^2 so latent responses are
        standardized; ``thresholds`` default to equal-probability normal
        cut points for the instrument's scale.
        """
        overrides = loading_overrides or {}
        loadings = {i.id: float(overrides.get(i.id, loading)) for i in instrument.items}
        residuals = {
            iid: (1.0 - lam * lam) if residual is None else float(residual)
            for iid, lam in loadings.items()
        }
        if thresholds is None:
            thresholds = equal_probability_thresholds(instrument.scale.max_code)
        return SimulatedRaterSpec(
            loadings=loadings,
            residuals=residuals,
            item_factor=instrument.structure(),
            thresholds=tuple(thresholds),
            seed=seed,
        )


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")


class SimulatedRaterProvider:
    """Deterministic rater drawing from a SimulatedRaterSpec.

    ``latent_scores`` maps text_id -> {factor_id: theta}. Texts or
    items missing from the model raise, which surfaces wiring bugs
    instead of producing silently meaningless ratings.
    """

    def __init__(
        self,
        spec: SimulatedRaterSpec,
        latent_scores: dict[str, dict[str, float]],
        scale: ResponseScale,
        model_id: str | None = None,
    ):
        if len(spec.thresholds) != scale.max_code - 1:
            raise ValueError(
                f"{len(spec.thresholds)} thresholds cannot produce {scale.max_code} categories"
            )
        self.spec = spec
        self.latent_scores = latent_scores
        self.scale = scale
        self.model_id = model_id or f"simulated-rater-{spec.seed}"
        self.call_count = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, *, text_id: str, item_id: str, attempt: int) -> str:
        with self._lock:
            self.call_count += 1
        lam = self.spec.loadings[item_id]
        psi = self.spec.residuals[item_id]
        factor = self.spec.item_factor[item_id]
        theta = self.latent_scores[text_id][factor]
        rng = np.random.default_rng(
            np.random.SeedSequence(
                [self.spec.seed % (2**32), _stable_int(text_id), _stable_int(item_id), attempt]
            )
        )
        eps = rng.standard_normal()
        y = lam * theta + np.sqrt(psi) * eps
        code = 1 + int(np.sum(np.asarray(self.spec.thresholds) < y))
        return self.scale.labels[code - 1]


def simulate_rater(
    spec: SimulatedRaterSpec,
    latent_scores: dict[str, dict[str, float]],
    scale: ResponseScale,
    model_id: str | None = None,
) -> SimulatedRaterProvider:
    """Build a provider that realizes ``spec`` over the given latent scores."""
    return SimulatedRaterProvider(spec, latent_scores, scale, model_id=model_id)


def score_one(
    prompt: str,
    provider,
    scale: ResponseScale,
    retry: RetryPolicy,
    *,
    text_id: str,
    item_id: str,
    sample_count: int = 1,
    attempt_offset: int = 0,
    sleep=time.sleep,
) -> RatingRecord:
    """Rate one prompt, retrying on parse and transport failures.

    Every attempt is a fresh provider call. The raw response of the
    final attempt is preserved whatever the outcome; transport failures
    store the error text in its place. Never raises: failures come back
    in ``status``.
    """
    phash = prompt_digest(provider.model_id, prompt)
    if sample_count > 1:
        return _score_multi_sample(
            prompt, provider, scale, retry, phash, text_id=text_id, item_id=item_id,
            sample_count=sample_count, sleep=sleep,
        )

    raw = ""
    status = STATUS_PROVIDER_ERROR
    code: float | None = None
    attempt = 0
    for attempt in range(1, retry.max_attempts + 1):
        try:
            raw = provider.complete(
                prompt, text_id=text_id, item_id=item_id, attempt=attempt + attempt_offset
            )
        except ProviderError as exc:
            raw = f"<provider error: {exc}>"
            status = STATUS_PROVIDER_ERROR
            if attempt < retry.max_attempts and retry.backoff_base > 0:
                sleep(retry.delay(attempt))
            continue
        try:
            code = parse_response(raw, scale)
            status = STATUS_OK
            break
        except (ParseFailure, ParseAmbiguityError):
            status = STATUS_PARSE_FAILED
            code = None
    return RatingRecord(
        text_id=text_id,
        item_id=item_id,
        model_id=provider.model_id,
        prompt_hash=phash,
        raw_response=raw,
        parsed_code=code,
        status=status,
        attempt_count=attempt,
    )


def _score_multi_sample(
    prompt, provider, scale, retry, phash, *, text_id, item_id, sample_count, sleep
) -> RatingRecord:
    # Optional stochastic-decoding mode: average the parsed codes of
    # sample_count independent calls. Bypasses the response cache.
    # Samples get disjoint attempt numbers so a seeded provider draws
    # fresh noise for each one.
    codes = []
    raw = ""
    attempts = 0
    for s in range(sample_count):
        rec = score_one(
            prompt, provider, scale, retry, text_id=text_id, item_id=item_id,
            attempt_offset=s * retry.max_attempts, sleep=sleep,
        )
        attempts += rec.attempt_count
        raw = rec.raw_response
        if rec.status == STATUS_OK:
            codes.append(rec.parsed_code)
    if codes:
        return RatingRecord(
            text_id=text_id, item_id=item_id, model_id=provider.model_id,
            prompt_hash=phash, raw_response=raw,
            parsed_code=float(np.mean(codes)), status=STATUS_OK, attempt_count=attempts,
        )
    return RatingRecord(
        text_id=text_id, item_id=item_id, model_id=provider.model_id,
        prompt_hash=phash, raw_response=raw, parsed_code=None,
        status=STATUS_PARSE_FAILED, attempt_count=attempts,
    )


class ResponseCache:
    """Append-only JSON-lines store of raw provider responses.

    One line per response with fields (prompt_hash, model_id,
    raw_response, timestamp); lookups key on (prompt_hash, model_id)
    so switching models never replays stale output. Concurrent readers
    are safe; appends are serialized by a lock.
    """

    def __init__(self, path: str | None):
        self.path = path
        self._entries: dict[tuple[str, str], str] = {}
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._entries[(obj["prompt_hash"], obj["model_id"])] = obj["raw_response"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, prompt_hash: str, model_id: str) -> str | None:
        return self._entries.get((prompt_hash, model_id))

    def append_many(self, rows: list[tuple[str, str, str]]) -> None:
        """Persist (prompt_hash, model_id, raw_response) rows."""
        with self._lock:
            new = [(h, m, r) for h, m, r in rows if (h, m) not in self._entries]
            for h, m, r in new:
                self._entries[(h, m)] = r
            if self.path and new:
                with open(self.path, "a", encoding="utf-8") as fh:
                    for h, m, r in new:
                        fh.write(
                            json.dumps(
                                {
                                    "prompt_hash": h,
                                    "model_id": m,
                                    "raw_response": r,
                                    "timestamp": time.time(),
                                },
                                sort_keys=True,
                                ensure_ascii=False,
                            )
                            + "\n"
                        )


def batch_score(
    instrument: Instrument,
    corpus: list[TextRecord],
    provider,
    cache: ResponseCache | None = None,
    concurrency_limit: int = 4,
    retry: RetryPolicy | None = None,
    sample_count: int = 1,
) -> list[RatingRecord]:
    """Rate every (text, item) pair, via the cache where possible.

    Returns exactly one record per pair, sorted by (text_id, item_id)
    regardless of completion order. Cache hits are replayed without any
    provider call and get attempt_count 1; misses that produced a real
    response (parse ok or parse failed) are appended to the cache when
    the batch finishes. Per-record failures are carried in ``status``;
    this function never raises for provider trouble.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    retry = retry or RetryPolicy()
    cache = cache if cache is not None else ResponseCache(None)
    use_cache = sample_count == 1

    tasks = []
    cached_records: list[RatingRecord] = []
    for text in corpus:
        for item in instrument.items:
            prompt = render_prompt(instrument.template, item, text.text, instrument.scale)
            phash = prompt_digest(provider.model_id, prompt)
            hit = cache.get(phash, provider.model_id) if use_cache else None
            if hit is not None:
                cached_records.append(
                    _replay_record(text.id, item.id, provider.model_id, phash, hit, instrument.scale)
                )
            else:
                tasks.append((text.id, item.id, prompt))

    def run_task(task):
        text_id, item_id, prompt = task
        return score_one(
            prompt, provider, instrument.scale, retry,
            text_id=text_id, item_id=item_id, sample_count=sample_count,
        )

    fresh: list[RatingRecord] = []
    if tasks:
        workers = max(1, min(concurrency_limit, len(tasks)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(run_task, tasks))

    if use_cache:
        appendable = sorted(
            (
                (r.prompt_hash, r.model_id, r.raw_response)
                for r in fresh
                if r.status in (STATUS_OK, STATUS_PARSE_FAILED)
            ),
        )
        cache.append_many(appendable)

    records = cached_records + fresh
    records.sort(key=lambda r: (r.text_id, r.item_id))
    return records


def _replay_record(text_id, item_id, model_id, phash, raw, scale) -> RatingRecord:
    # A cache hit consumes no provider call: rebuild the record from the
    # stored response. Parse outcome is a pure function of the response,
    # so replayed status matches the original; attempt_count is 1 since
    # no fresh attempts were made.
    try:
        code: float | None = parse_response(raw, scale)
        status = STATUS_OK
    except (ParseFailure, ParseAmbiguityError):
        code = None
        status = STATUS_PARSE_FAILED
    return RatingRecord(
        text_id=text_id,
        item_id=item_id,
        model_id=model_id,
        prompt_hash=phash,
        raw_response=raw,
        parsed_code=code,
        status=status,
        attempt_count=1,
    )
