"""Internal-consistency coefficients and per-item diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .factor_model import FactorModel
from .instrument import Instrument
from .ratings import RatingMatrix

DEFAULT_LOADING_CUTOFF = 0.40


def cronbach_alpha(cov: np.ndarray, item_subset: list[int] | None = None) -> float:
    """Cronbach's alpha from a covariance matrix.

    alpha = (k / (k - 1)) * (1 - sum of item variances / total variance)
    where the total variance is the sum of all covariance entries. May
    be negative; cannot exceed 1 for a positive semidefinite input.

    Parameters
    ----------
    cov : ndarray, shape (k, k)
        Item covariance matrix.
    item_subset : list of int, optional
        Column indices restricting the computation to a subscale.
    """
    S = np.asarray(cov, dtype=float)
    if item_subset is not None:
        idx = list(item_subset)
        S = S[np.ix_(idx, idx)]
    k = S.shape[0]
    if k < 2:
        raise ValueError(f"alpha needs >= 2 items, got {k}")
    total = float(S.sum())
    if total <= 0:
        raise ValueError("total score variance is not positive")
    alpha = (k / (k - 1)) * (1.0 - float(np.trace(S)) / total)
    if alpha > 1.0:
        if alpha > 1.0 + 1e-8:
            warnings.warn(
                f"alpha = {alpha:.6g} > 1; covariance input is not PSD", stacklevel=2
            )
        alpha = 1.0
    return alpha


def mcdonald_omega(model: FactorModel, factor_id: str) -> float:
    """McDonald's omega (total) for one factor of a fitted model.

    omega = (sum of loadings)^2 / ((sum of loadings)^2 + sum of
    residual variances), over the factor's items. Invariant under a
    joint sign flip of the factor's loadings. Returns a value in [0, 1].
    """
    items = model.items_of_factor(factor_id)
    if not items:
        raise KeyError(f"factor {factor_id!r} has no items")
    j = model.factor_ids.index(factor_id)
    rows = [model.item_ids.index(i) for i in items]
    lam_sum = float(np.sum(model.loadings[rows, j]))
    psi_sum = float(np.sum(model.residual_variances[rows]))
    common = lam_sum * lam_sum
    return common / (common + psi_sum)


@dataclass(frozen=True)
class ItemDiagnostic:
    item_id: str
    factor_id: str
    own_loading: float
    item_total_r: float | None
    flagged: bool


def item_diagnostics(
    matrix: RatingMatrix,
    instrument: Instrument,
    model: FactorModel,
    loading_cutoff: float = DEFAULT_LOADING_CUTOFF,
) -> list[ItemDiagnostic]:
    """Per-item loading and corrected item-total correlation.

    The corrected item-total correlation relates an item to the sum of
    the *other* items of its factor, over rows where all of them are
    present. An item is flagged iff |own-factor loading| < cutoff
    (strict, so a loading exactly at the cutoff passes). Factors with a
    single item get item_total_r = None.
    """
    out = []
    structure = model.structure or instrument.structure()
    for item_id in model.item_ids:
        factor_id = structure[item_id]
        loading = model.own_loading(item_id)
        siblings = [i for i in model.item_ids if structure[i] == factor_id and i != item_id]
        r = None
        if siblings:
            cols = [matrix.item_ids.index(i) for i in [item_id, *siblings]]
            sub = matrix.values[:, cols]
            rows = ~np.isnan(sub).any(axis=1)
            if rows.sum() >= 3:
                x = sub[rows, 0]
                rest = sub[rows, 1:].sum(axis=1)
                sx, sr = x.std(ddof=1), rest.std(ddof=1)
                if sx > 0 and sr > 0:
                    r = float(np.corrcoef(x, rest)[0, 1])
        out.append(
            ItemDiagnostic(
                item_id=item_id,
                factor_id=factor_id,
                own_loading=loading,
                item_total_r=r,
                flagged=abs(loading) < loading_cutoff,
            )
        )
    return out


@dataclass(frozen=True)
class FactorReliability:
    factor_id: str
    alpha: float | None
    omega: float
    items: tuple[ItemDiagnostic, ...]


@dataclass(frozen=True)
class ReliabilityReport:
    """Alpha, omega and item diagnostics per factor, plus retention."""

    factors: tuple[FactorReliability, ...]
    retained_factor_count: int
    loading_cutoff: float

    def factor(self, factor_id: str) -> FactorReliability:
        for f in self.factors:
            if f.factor_id == factor_id:
                return f
        raise KeyError(f"unknown factor id: {factor_id!r}")

    def flagged_items(self) -> list[str]:
        return [d.item_id for f in self.factors for d in f.items if d.flagged]

    def to_dict(self) -> dict:
        return {
            "retained_factor_count": self.retained_factor_count,
            "loading_cutoff": self.loading_cutoff,
            "factors": [
                {
                    "factor_id": f.factor_id,
                    "alpha": f.alpha,
                    "omega": f.omega,
                    "items": [
                        {
                            "item_id": d.item_id,
                            "factor_id": d.factor_id,
                            "own_loading": d.own_loading,
                            "item_total_r": d.item_total_r,
                            "flagged": d.flagged,
                        }
                        for d in f.items
                    ],
                }
                for f in self.factors
            ],
        }
