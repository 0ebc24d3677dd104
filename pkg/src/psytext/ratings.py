"""Rating matrices: texts x items numeric data built from rating records.

All operations here are pure; matrices are treated as immutable values
after construction, so analysis stages can fan out over them safely.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, PsytextError
from .instrument import Instrument
from .raters import STATUS_OK, RatingRecord


class MatrixError(PsytextError):
    pass


@dataclass(frozen=True)
class RatingMatrix:
    """n texts by k items matrix of parsed codes with a missing mask.

    ``values`` holds NaN where ``missing`` is True; present values lie
    in [1, scale_max]. Row and column id lists are duplicate-free and
    sorted by construction.
    """

    text_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    values: np.ndarray
    missing: np.ndarray
    scale_max: int

    def __post_init__(self):
        n, k = self.values.shape
        if len(self.text_ids) != n or len(self.item_ids) != k:
            raise MatrixError("id lists do not match matrix dimensions")
        if len(set(self.text_ids)) != n or len(set(self.item_ids)) != k:
            raise MatrixError("duplicate ids")
        present = self.values[~self.missing]
        if present.size and (present.min() < 1 or present.max() > self.scale_max):
            raise MatrixError(f"values outside [1, {self.scale_max}]")

    @property
    def n_texts(self) -> int:
        return len(self.text_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def column(self, item_id: str) -> np.ndarray:
        return self.values[:, self.item_ids.index(item_id)]

    def complete_rows(self) -> np.ndarray:
        """Boolean mask of rows with no missing cell."""
        return ~self.missing.any(axis=1)

    def subset_items(self, item_ids) -> "RatingMatrix":
        idx = [self.item_ids.index(i) for i in item_ids]
        return RatingMatrix(
            text_ids=self.text_ids,
            item_ids=tuple(item_ids),
            values=self.values[:, idx].copy(),
            missing=self.missing[:, idx].copy(),
            scale_max=self.scale_max,
        )

    def subset_texts(self, text_ids) -> "RatingMatrix":
        idx = [self.text_ids.index(t) for t in text_ids]
        return RatingMatrix(
            text_ids=tuple(text_ids),
            item_ids=self.item_ids,
            values=self.values[idx, :].copy(),
            missing=self.missing[idx, :].copy(),
            scale_max=self.scale_max,
        )


@dataclass(frozen=True)
class SplitSpec:
    """Holdout fraction plus the seed that fixes the row partition."""

    holdout_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.holdout_fraction <= 1.0:
            raise ValueError(f"holdout_fraction outside [0, 1]: {self.holdout_fraction}")


def assemble_matrix(records: list[RatingRecord], instrument: Instrument) -> RatingMatrix:
    """Pivot records into a texts x items matrix.

    Cell (t, i) carries the parsed code of the ok-status record for
    that pair and is missing otherwise. Two ok records for one pair is
    a pipeline bug and raises.
    """
    known_items = set(instrument.item_ids())
    for rec in records:
        if rec.item_id not in known_items:
            raise MatrixError(f"record references unknown item {rec.item_id!r}")

    text_ids = tuple(sorted({r.text_id for r in records}))
    item_ids = tuple(sorted(instrument.item_ids()))
    t_index = {t: i for i, t in enumerate(text_ids)}
    i_index = {it: j for j, it in enumerate(item_ids)}

    values = np.full((len(text_ids), len(item_ids)), np.nan)
    missing = np.ones((len(text_ids), len(item_ids)), dtype=bool)
    for rec in records:
        if rec.status != STATUS_OK:
            continue
        r, c = t_index[rec.text_id], i_index[rec.item_id]
        if not missing[r, c]:
            raise MatrixError(
                f"duplicate ok-status records for text {rec.text_id!r}, item {rec.item_id!r}"
            )
        values[r, c] = rec.parsed_code
        missing[r, c] = False

    return RatingMatrix(
        text_ids=text_ids,
        item_ids=item_ids,
        values=values,
        missing=missing,
        scale_max=instrument.scale.max_code,
    )


def apply_keying(matrix: RatingMatrix, instrument: Instrument) -> RatingMatrix:
    """Recode reverse-keyed items as m + 1 - x; involution on those columns."""
    values = matrix.values.copy()
    m = matrix.scale_max
    for j, item_id in enumerate(matrix.item_ids):
        if instrument.item(item_id).reverse_keyed:
            col = values[:, j]
            values[:, j] = np.where(np.isnan(col), np.nan, m + 1 - col)
    return RatingMatrix(
        text_ids=matrix.text_ids,
        item_ids=matrix.item_ids,
        values=values,
        missing=matrix.missing.copy(),
        scale_max=m,
    )


def split_holdout(matrix: RatingMatrix, spec: SplitSpec) -> tuple[RatingMatrix, RatingMatrix]:
    """Partition rows into (development, holdout) sets.

    The partition is a pure function of (seed, text_ids): the sorted id
    list is shuffled by a seeded permutation and the first
    ceil(fraction * n) shuffled ids form the holdout. Subsets keep rows
    in sorted-id order, so equal inputs give byte-equal outputs.
    """
    ids = sorted(matrix.text_ids)
    n = len(ids)
    n_holdout = math.ceil(spec.holdout_fraction * n)
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    holdout_ids = sorted(ids[i] for i in perm[:n_holdout])
    dev_ids = sorted(ids[i] for i in perm[n_holdout:])
    return matrix.subset_texts(tuple(dev_ids)), matrix.subset_texts(tuple(holdout_ids))


@dataclass(frozen=True)
class CovarianceResult:
    """Sample covariance with its companion correlation matrix.

    ``item_ids`` indexes ``cov``; ``included_item_ids`` indexes
    ``corr`` and drops any zero-variance item (constant output on an
    item is diagnostic information, but it has no defined correlation).
    """

    item_ids: tuple[str, ...]
    cov: np.ndarray
    included_item_ids: tuple[str, ...]
    corr: np.ndarray
    n_effective: int
    zero_variance_items: tuple[str, ...]
    policy: str

    def included_cov(self) -> np.ndarray:
        idx = [self.item_ids.index(i) for i in self.included_item_ids]
        return self.cov[np.ix_(idx, idx)]


def covariance(matrix: RatingMatrix, policy: str = "listwise") -> CovarianceResult:
    """Unbiased (n-1) covariance of the item columns.

    listwise (default) uses complete rows only, which keeps the matrix
    positive semidefinite; pairwise uses all jointly present pairs and
    reports the smallest pairwise count as the effective n.
    """
    if policy not in ("listwise", "pairwise"):
        raise ValueError(f"unknown missing-data policy {policy!r}")
    k = matrix.n_items

    if policy == "listwise":
        rows = matrix.complete_rows()
        n_eff = int(rows.sum())
        if n_eff < k + 1:
            raise InsufficientDataError(
                f"listwise deletion leaves {n_eff} complete rows; need >= {k + 1}"
            )
        X = matrix.values[rows]
        cov = np.cov(X, rowvar=False, ddof=1)
        cov = np.atleast_2d(cov)
    else:
        present = ~matrix.missing
        cov = np.zeros((k, k))
        n_min = None
        for i in range(k):
            for j in range(i, k):
                both = present[:, i] & present[:, j]
                nij = int(both.sum())
                if nij < 2:
                    raise InsufficientDataError(
                        f"pair ({matrix.item_ids[i]}, {matrix.item_ids[j]}) has {nij} joint rows"
                    )
                xi = matrix.values[both, i]
                xj = matrix.values[both, j]
                cov[i, j] = cov[j, i] = np.sum((xi - xi.mean()) * (xj - xj.mean())) / (nij - 1)
                if i != j:
                    n_min = nij if n_min is None else min(n_min, nij)
        n_eff = n_min if n_min is not None else int(present[:, 0].sum())

    cov = (cov + cov.T) / 2.0  # exact symmetry

    variances = np.diag(cov)
    zero_var = tuple(
        matrix.item_ids[i] for i in range(k) if variances[i] <= 0 or not np.isfinite(variances[i])
    )
    if zero_var:
        warnings.warn(
            f"zero-variance items excluded from correlation: {list(zero_var)}", stacklevel=2
        )
    included = tuple(i for i in matrix.item_ids if i not in zero_var)
    idx = [matrix.item_ids.index(i) for i in included]
    sub = cov[np.ix_(idx, idx)]
    d = np.sqrt(np.diag(sub))
    corr = sub / np.outer(d, d)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)

    return CovarianceResult(
        item_ids=matrix.item_ids,
        cov=cov,
        included_item_ids=included,
        corr=corr,
        n_effective=n_eff,
        zero_variance_items=zero_var,
        policy=policy,
    )


def _format_cell(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_wide_csv(matrix: RatingMatrix, path: str) -> None:
    """Wide export: header text_id + item ids, empty cell = missing."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["text_id", *matrix.item_ids])
        for r, tid in enumerate(matrix.text_ids):
            row = [tid]
            for c in range(matrix.n_items):
                row.append("" if matrix.missing[r, c] else _format_cell(matrix.values[r, c]))
            writer.writerow(row)


def write_long_jsonl(records: list[RatingRecord], path: str) -> None:
    """Long export: one RatingRecord mirror per line, full provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_wide_csv(path: str, scale_max: int) -> RatingMatrix:
    """Inverse of write_wide_csv (used by later pipeline stages)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        item_ids = tuple(header[1:])
        text_ids = []
        rows = []
        for row in reader:
            text_ids.append(row[0])
            rows.append([float(c) if c != "" else np.nan for c in row[1:]])
    values = np.asarray(rows, dtype=float).reshape(len(text_ids), len(item_ids))
    return RatingMatrix(
        text_ids=tuple(text_ids),
        item_ids=item_ids,
        values=values,
        missing=np.isnan(values),
        scale_max=scale_max,
    )
