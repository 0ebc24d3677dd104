"""Criterion validity: aggregate construct scores and their external correlates."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .factor_model import FactorModel
from .instrument import Instrument
from .ratings import RatingMatrix

log = logging.getLogger(__name__)

MIN_OVERLAP = 3


@dataclass(frozen=True)
class CriterionSeries:
    """An external variable keyed by text id, optionally with its reliability."""

    name: str
    values: dict[str, float]
    reliability: float | None = None
    expected_sign: str | None = None

    def __post_init__(self):
        if self.reliability is not None and not 0.0 < self.reliability <= 1.0:
            raise ValueError(f"criterion reliability outside (0, 1]: {self.reliability}")
        if self.expected_sign not in (None, "+", "-"):
            raise ValueError(f"expected sign must be '+' or '-', got {self.expected_sign!r}")


def aggregate_scores(
    matrix: RatingMatrix,
    instrument: Instrument,
    factor_id: str,
    method: str = "unit_weighted_mean",
    model: FactorModel | None = None,
) -> dict[str, float]:
    """Aggregate a factor's keyed item codes into one score per text.

    unit_weighted_mean (default) averages the present item codes; texts
    with every item missing are dropped from the map. factor_scores
    computes regression (Thomson) scores from a fitted model and needs
    complete rows.
    """
    if factor_id not in instrument.construct_ids():
        raise KeyError(f"unknown factor id: {factor_id!r}")
    item_ids = [i.id for i in instrument.items_of(factor_id)]
    if not item_ids:
        raise KeyError(f"factor {factor_id!r} has no items")

    if method == "unit_weighted_mean":
        cols = [matrix.item_ids.index(i) for i in item_ids]
        sub = matrix.values[:, cols]
        out: dict[str, float] = {}
        for r, tid in enumerate(matrix.text_ids):
            row = sub[r]
            present = ~np.isnan(row)
            if present.any():
                out[tid] = float(row[present].mean())
        return out

    if method == "factor_scores":
        if model is None:
            raise ValueError("factor_scores aggregation requires a fitted model")
        return regression_factor_scores(matrix, model, factor_id)

    raise ValueError(f"unknown aggregation method {method!r}")


def regression_factor_scores(
    matrix: RatingMatrix, model: FactorModel, factor_id: str
) -> dict[str, float]:
    """Regression factor scores: f = Phi Lambda' Sigma^-1 (x - mean).

    Uses the model-implied covariance; rows with any missing item are
    omitted.
    """
    if factor_id not in model.factor_ids:
        raise KeyError(f"unknown factor id: {factor_id!r}")
    cols = [matrix.item_ids.index(i) for i in model.item_ids]
    X = matrix.values[:, cols]
    complete = ~np.isnan(X).any(axis=1)
    Xc = X[complete]
    if Xc.shape[0] == 0:
        return {}
    Sigma = model.implied_cov()
    W = model.factor_correlations @ model.loadings.T @ np.linalg.inv(Sigma)
    centered = Xc - Xc.mean(axis=0)
    scores = centered @ W.T
    j = model.factor_ids.index(factor_id)
    ids = [t for t, c in zip(matrix.text_ids, complete) if c]
    return {t: float(s) for t, s in zip(ids, scores[:, j])}


@dataclass(frozen=True)
class DisattenuationResult:
    value: float
    out_of_range: bool


def disattenuate(r_raw: float, r_xx: float, r_yy: float) -> DisattenuationResult:
    """Correct a correlation for unreliability: r / sqrt(r_xx * r_yy).

    Values exceeding 1 in magnitude are returned as-is with the
    out_of_range flag set; they signal misspecified reliabilities, and
    clamping would hide that.
    """
    for name, r in (("r_xx", r_xx), ("r_yy", r_yy)):
        if not 0.0 < r <= 1.0:
            raise ValueError(f"{name} must be in (0, 1], got {r}")
    value = r_raw / math.sqrt(r_xx * r_yy)
    return DisattenuationResult(value=value, out_of_range=abs(value) > 1.0)


@dataclass(frozen=True)
class ValidityEntry:
    factor_id: str
    criterion: str
    n_overlap: int
    r_raw: float
    r_disattenuated: float | None
    disattenuation_out_of_range: bool
    expected_sign: str | None
    sign_consistent: bool | None

    def to_dict(self) -> dict:
        return {
            "factor_id": self.factor_id,
            "criterion": self.criterion,
            "n_overlap": self.n_overlap,
            "r_raw": self.r_raw,
            "r_disattenuated": self.r_disattenuated,
            "disattenuation_out_of_range": self.disattenuation_out_of_range,
            "expected_sign": self.expected_sign,
            "sign_consistent": self.sign_consistent,
        }


@dataclass(frozen=True)
class ValidityReport:
    entries: tuple[ValidityEntry, ...]
    skipped: tuple[tuple[str, str], ...]  # (criterion, reason)

    def entry(self, factor_id: str, criterion: str) -> ValidityEntry:
        for e in self.entries:
            if e.factor_id == factor_id and e.criterion == criterion:
                return e
        raise KeyError(f"no entry for ({factor_id!r}, {criterion!r})")

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "skipped": [list(s) for s in self.skipped],
        }


def validity_correlations(
    scores: dict[str, float],
    criteria: list[CriterionSeries],
    factor_id: str,
    expected_signs: dict[str, str] | None = None,
    score_reliability: float | None = None,
) -> ValidityReport:
    """Pearson correlations of one factor's scores with each criterion.

    Criteria overlapping fewer than MIN_OVERLAP texts are skipped with
    a warning. sign_consistent compares sign(r_raw) with the declared
    expectation when one exists; disattenuation is applied when both
    the score reliability and the criterion reliability are known.
    """
    expected_signs = expected_signs or {}
    entries: list[ValidityEntry] = []
    skipped: list[tuple[str, str]] = []
    for crit in criteria:
        common = sorted(set(scores) & set(crit.values))
        if len(common) < MIN_OVERLAP:
            reason = f"only {len(common)} overlapping texts (need >= {MIN_OVERLAP})"
            log.warning("criterion %s skipped: %s", crit.name, reason)
            skipped.append((crit.name, reason))
            continue
        x = np.array([scores[t] for t in common])
        y = np.array([crit.values[t] for t in common])
        if x.std(ddof=1) == 0 or y.std(ddof=1) == 0:
            reason = "zero variance in scores or criterion over the overlap"
            log.warning("criterion %s skipped: %s", crit.name, reason)
            skipped.append((crit.name, reason))
            continue
        r_raw = float(np.corrcoef(x, y)[0, 1])

        expected = expected_signs.get(crit.name, crit.expected_sign)
        sign_ok = None
        if expected is not None:
            sign_ok = (r_raw > 0) if expected == "+" else (r_raw < 0)

        r_dis = None
        out_of_range = False
        if score_reliability is not None and crit.reliability is not None:
            res = disattenuate(r_raw, score_reliability, crit.reliability)
            r_dis, out_of_range = res.value, res.out_of_range

        entries.append(
            ValidityEntry(
                factor_id=factor_id,
                criterion=crit.name,
                n_overlap=len(common),
                r_raw=r_raw,
                r_disattenuated=r_dis,
                disattenuation_out_of_range=out_of_range,
                expected_sign=expected,
                sign_consistent=sign_ok,
            )
        )
    return ValidityReport(entries=tuple(entries), skipped=tuple(skipped))


def load_criteria(
    csv_path: str, sidecar_path: str | None = None
) -> list[CriterionSeries]:
    """Read a criteria CSV (text_id column + one column per criterion).

    The optional YAML sidecar declares per-criterion reliability and
    expected sign:  name: {reliability: 0.9, expected_sign: "+"}.
    Empty cells are treated as missing for that criterion.
    """
    meta: dict[str, dict] = {}
    if sidecar_path:
        with open(sidecar_path, "r", encoding="utf-8") as fh:
            meta = yaml.safe_load(fh) or {}

    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "text_id":
            raise ValueError(f"{csv_path}: first column must be 'text_id'")
        names = header[1:]
        values: dict[str, dict[str, float]] = {n: {} for n in names}
        for row in reader:
            tid = row[0]
            for name, cell in zip(names, row[1:]):
                if cell != "":
                    values[name][tid] = float(cell)

    out = []
    for name in names:
        m = meta.get(name, {}) or {}
        out.append(
            CriterionSeries(
                name=name,
                values=values[name],
                reliability=m.get("reliability"),
                expected_sign=m.get("expected_sign"),
            )
        )
    return out


def write_criteria(
    csv_path: str,
    criteria: list[CriterionSeries],
    sidecar_path: str | None = None,
) -> None:
    text_ids = sorted({t for c in criteria for t in c.values})
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["text_id", *[c.name for c in criteria]])
        for tid in text_ids:
            row = [tid]
            for c in criteria:
                v = c.values.get(tid)
                row.append("" if v is None else repr(float(v)))
            writer.writerow(row)
    if sidecar_path:
        meta = {}
        for c in criteria:
            entry = {}
            if c.reliability is not None:
                entry["reliability"] = float(c.reliability)
            if c.expected_sign is not None:
                entry["expected_sign"] = c.expected_sign
            if entry:
                meta[c.name] = entry
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(meta, fh, sort_keys=True)
