"""Synthetic study generation: seeded latent scores, texts and criteria.

Together with the simulated rater this forms a self-contained oracle:
every population quantity (loadings, reliabilities, criterion
correlations) is known exactly, so pipeline estimates can be checked
against the truth that generated them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .config import SimulationSettings
from .corpus import TextRecord
from .instrument import Instrument
from .seeding import derive_seed
from .validity import CriterionSeries


@dataclass(frozen=True)
class StudyBundle:
    """Everything a synthetic study needs downstream."""

    corpus: list[TextRecord]
    latent_scores: dict[str, dict[str, float]]
    factor_ids: tuple[str, ...]
    criterion: CriterionSeries


def _factor_correlation_matrix(q: int, rho: float) -> np.ndarray:
    Phi = np.full((q, q), rho)
    np.fill_diagonal(Phi, 1.0)
    if q > 1 and np.min(np.linalg.eigvalsh(Phi)) <= 0:
        raise ValueError(f"factor correlation {rho} is not positive definite for q={q}")
    return Phi


def generate_latent_scores(
    factor_ids: tuple[str, ...],
    n_texts: int,
    factor_correlation: float,
    seed: int,
) -> dict[str, dict[str, float]]:
    """Multivariate standard-normal factor scores for synthetic texts.

    Text ids are zero-padded so lexicographic order matches generation
    order, keeping every downstream sort deterministic.
    """
    q = len(factor_ids)
    Phi = _factor_correlation_matrix(q, factor_correlation)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(Phi)
    draws = rng.standard_normal((n_texts, q)) @ chol.T
    width = max(4, len(str(n_texts)))
    out = {}
    for i in range(n_texts):
        tid = f"t{i + 1:0{width}d}"
        out[tid] = {f: float(draws[i, j]) for j, f in enumerate(factor_ids)}
    return out


def generate_study(
    instrument: Instrument,
    settings: SimulationSettings,
    master_seed: int,
) -> StudyBundle:
    """Build the synthetic corpus, latent scores and criterion.

    The criterion is r * theta + sqrt(1 - r^2) * noise against the
    configured target factor, so its population correlation with that
    factor's latent score is exactly r.
    """
    factor_ids = instrument.construct_ids()
    latent = generate_latent_scores(
        factor_ids,
        settings.n_texts,
        settings.factor_correlation,
        derive_seed(master_seed, "simulate.latent"),
    )

    corpus = [
        TextRecord(id=tid, text=f"synthetic study text {tid}")
        for tid in sorted(latent)
    ]

    target = settings.criterion_factor or factor_ids[0]
    if target not in factor_ids:
        raise ValueError(f"criterion factor {target!r} not among constructs {factor_ids}")
    r = settings.criterion_r
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"criterion correlation outside [-1, 1]: {r}")
    rng = np.random.default_rng(derive_seed(master_seed, "simulate.criterion"))
    noise_scale = np.sqrt(max(0.0, 1.0 - r * r))
    values = {}
    for tid in sorted(latent):
        values[tid] = float(r * latent[tid][target] + noise_scale * rng.standard_normal())
    criterion = CriterionSeries(
        name=settings.criterion_name,
        values=values,
        reliability=settings.criterion_reliability,
        expected_sign="+" if r >= 0 else "-",
    )

    return StudyBundle(
        corpus=corpus,
        latent_scores=latent,
        factor_ids=factor_ids,
        criterion=criterion,
    )


def write_latent_scores(path: str, latent: dict[str, dict[str, float]], factor_ids) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["text_id", *factor_ids])
        for tid in sorted(latent):
            writer.writerow([tid, *[repr(latent[tid][f]) for f in factor_ids]])


def read_latent_scores(path: str) -> dict[str, dict[str, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        factors = header[1:]
        out = {}
        for row in reader:
            out[row[0]] = {f: float(v) for f, v in zip(factors, row[1:])}
    return out
