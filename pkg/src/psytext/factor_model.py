"""Common factor model: loadings, residual variances, factor correlations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PSI_FLOOR = 1e-4


@dataclass(frozen=True)
class FactorModel:
    """A fitted factor solution.

    Parameters
    ----------
    item_ids, factor_ids : tuple of str
        Row and column labels of the loading matrix.
    loadings : ndarray, shape (k, q)
    residual_variances : ndarray, shape (k,)
        Unique variances, floored at PSI_FLOOR.
    factor_correlations : ndarray, shape (q, q)
        Symmetric with unit diagonal (factor variances are fixed at 1
        for identification, so loadings can be read directly).
    structure : dict or None
        item id -> factor id assignment when the model was fitted to a
        hypothesized simple structure; None for exploratory solutions.
    """

    item_ids: tuple[str, ...]
    factor_ids: tuple[str, ...]
    loadings: np.ndarray
    residual_variances: np.ndarray
    factor_correlations: np.ndarray
    structure: dict[str, str] | None = field(default=None)

    def __post_init__(self):
        k, q = self.loadings.shape
        if len(self.item_ids) != k or len(self.factor_ids) != q:
            raise ValueError("id lists do not match loading matrix shape")
        if self.residual_variances.shape != (k,):
            raise ValueError("residual_variances must have one entry per item")
        if np.any(self.residual_variances < PSI_FLOOR - 1e-12):
            raise ValueError(f"residual variances must be >= {PSI_FLOOR}")
        if self.factor_correlations.shape != (q, q):
            raise ValueError("factor_correlations must be q x q")
        if not np.allclose(np.diag(self.factor_correlations), 1.0, atol=1e-10):
            raise ValueError("factor_correlations must have unit diagonal")
        if not np.allclose(self.factor_correlations, self.factor_correlations.T, atol=1e-10):
            raise ValueError("factor_correlations must be symmetric")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_factors(self) -> int:
        return len(self.factor_ids)

    def implied_cov(self) -> np.ndarray:
        """Model-implied covariance: loadings Phi loadings' + diag(psi)."""
        L, P = self.loadings, self.factor_correlations
        return L @ P @ L.T + np.diag(self.residual_variances)

    def items_of_factor(self, factor_id: str) -> list[str]:
        """Items belonging to a factor.

        Uses the fitted structure when present; exploratory models fall
        back to assigning each item to its largest-magnitude loading.
        """
        if factor_id not in self.factor_ids:
            raise KeyError(f"unknown factor id: {factor_id!r}")
        if self.structure is not None:
            return [i for i in self.item_ids if self.structure[i] == factor_id]
        j = self.factor_ids.index(factor_id)
        out = []
        for r, item in enumerate(self.item_ids):
            if int(np.argmax(np.abs(self.loadings[r]))) == j:
                out.append(item)
        return out

    def loading_of(self, item_id: str, factor_id: str) -> float:
        r = self.item_ids.index(item_id)
        c = self.factor_ids.index(factor_id)
        return float(self.loadings[r, c])

    def own_loading(self, item_id: str) -> float:
        """Loading of an item on its own factor."""
        r = self.item_ids.index(item_id)
        if self.structure is not None:
            c = self.factor_ids.index(self.structure[item_id])
        else:
            c = int(np.argmax(np.abs(self.loadings[r])))
        return float(self.loadings[r, c])

    def to_dict(self) -> dict:
        return {
            "item_ids": list(self.item_ids),
            "factor_ids": list(self.factor_ids),
            "loadings": [[float(v) for v in row] for row in self.loadings],
            "residual_variances": [float(v) for v in self.residual_variances],
            "factor_correlations": [[float(v) for v in row] for row in self.factor_correlations],
            "structure": dict(self.structure) if self.structure is not None else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "FactorModel":
        return FactorModel(
            item_ids=tuple(d["item_ids"]),
            factor_ids=tuple(d["factor_ids"]),
            loadings=np.asarray(d["loadings"], dtype=float),
            residual_variances=np.asarray(d["residual_variances"], dtype=float),
            factor_correlations=np.asarray(d["factor_correlations"], dtype=float),
            structure=d.get("structure"),
        )


def canonicalize_signs(loadings: np.ndarray, factor_corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip factor signs so each factor's largest-|loading| entry is positive.

    Factor sign is arbitrary in any factor model; fixing it makes
    solutions comparable and reruns byte-identical. Flipping factor j
    also flips row/column j of the factor correlations.
    """
    L = loadings.copy()
    P = factor_corr.copy()
    for j in range(L.shape[1]):
        i = int(np.argmax(np.abs(L[:, j])))
        if L[i, j] < 0:
            L[:, j] = -L[:, j]
            P[j, :] = -P[j, :]
            P[:, j] = -P[:, j]
            P[j, j] = 1.0
    return L, P
