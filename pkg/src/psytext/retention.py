"""Factor retention rules: parallel analysis and the eigenvalue-one rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .ratings import RatingMatrix, covariance


@dataclass(frozen=True)
class RetentionResult:
    """Outcome of a retention rule plus the eigenvalues behind it."""

    retained: int
    observed_eigenvalues: tuple[float, ...]
    reference_eigenvalues: tuple[float, ...] | None
    item_ids: tuple[str, ...]
    rule: str
    n_effective: int

    def to_dict(self) -> dict:
        return {
            "retained": self.retained,
            "observed_eigenvalues": list(self.observed_eigenvalues),
            "reference_eigenvalues": (
                list(self.reference_eigenvalues) if self.reference_eigenvalues else None
            ),
            "item_ids": list(self.item_ids),
            "rule": self.rule,
            "n_effective": self.n_effective,
        }


def _correlation_eigenvalues(X: np.ndarray) -> np.ndarray:
    R = np.corrcoef(X, rowvar=False)
    return np.sort(np.linalg.eigvalsh(R))[::-1]


def parallel_analysis(
    matrix: RatingMatrix,
    n_reps: int = 100,
    seed: int = 0,
) -> RetentionResult:
    """Parallel analysis with the mean-eigenvalue criterion.

    Compares the sample correlation eigenvalues of the complete-case
    data against the rank-wise mean eigenvalues of ``n_reps`` seeded
    standard-normal datasets of identical shape. Factors are retained
    while the observed eigenvalue at each successive rank exceeds its
    reference mean; the count stops at the first rank that does not.
    Deterministic given the seed.
    """
    cov_result = covariance(matrix, policy="listwise")
    ids = cov_result.included_item_ids
    k = len(ids)
    n = cov_result.n_effective
    if n < k + 1:
        raise InsufficientDataError(f"parallel analysis needs n >= k + 1 ({n} < {k + 1})")

    obs = np.sort(np.linalg.eigvalsh(cov_result.corr))[::-1]

    rng = np.random.default_rng(seed)
    ref = np.zeros((n_reps, k))
    for r in range(n_reps):
        Z = rng.standard_normal((n, k))
        ref[r] = _correlation_eigenvalues(Z)
    means = ref.mean(axis=0)

    retained = 0
    for i in range(k):
        if obs[i] > means[i]:
            retained += 1
        else:
            break

    return RetentionResult(
        retained=retained,
        observed_eigenvalues=tuple(float(v) for v in obs),
        reference_eigenvalues=tuple(float(v) for v in means),
        item_ids=ids,
        rule="parallel",
        n_effective=n,
    )


def kaiser_rule(matrix: RatingMatrix) -> RetentionResult:
    """Retain factors with correlation eigenvalues greater than 1."""
    cov_result = covariance(matrix, policy="listwise")
    obs = np.sort(np.linalg.eigvalsh(cov_result.corr))[::-1]
    return RetentionResult(
        retained=int(np.sum(obs > 1.0)),
        observed_eigenvalues=tuple(float(v) for v in obs),
        reference_eigenvalues=None,
        item_ids=cov_result.included_item_ids,
        rule="kaiser",
        n_effective=cov_result.n_effective,
    )
