"""Confirmatory factor analysis by maximum likelihood.

Fits a simple-structure factor model (each item loads on exactly one
hypothesized factor) to a sample covariance matrix by minimizing the
ML discrepancy

    F(theta) = ln|Sigma| + tr(S Sigma^-1) - ln|S| - k,
    Sigma    = Lambda Phi Lambda' + diag(psi),

with factor variances fixed at 1 for identification. Residual
variances are bounded below at PSI_FLOOR, which turns Heywood cases
into reportable bound activity instead of failures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import PsytextError
from .factor_model import PSI_FLOOR, FactorModel, canonicalize_signs

GRADIENT_TOL = 1e-6
MAX_ITERATIONS = 500
START_LOADING = 0.7
START_RESIDUAL = 0.3
START_FACTOR_CORR = 0.2
_PD_PENALTY = 1e12


class SingularCovarianceError(PsytextError):
    pass


@dataclass(frozen=True)
class CFAModelSpec:
    """Hypothesized structure: item -> factor map, correlated factors or not."""

    structure: dict[str, str]
    correlated: bool = True

    def __post_init__(self):
        counts: dict[str, int] = {}
        for f in self.structure.values():
            counts[f] = counts.get(f, 0) + 1
        q = len(counts)
        for f, c in counts.items():
            minimum = 2 if (q >= 2 and self.correlated) else 3
            if c < minimum:
                raise ValueError(
                    f"factor {f!r} has {c} items; needs >= {minimum} for identification"
                )

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.structure))

    @property
    def factor_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.structure.values())))


class _Parameterization:
    """Maps the free-parameter vector to (Lambda, psi, Phi) and back.

    Layout: k loadings (one per item, on its assigned factor), then k
    residual variances, then the q(q-1)/2 upper-triangle factor
    correlations when factors are correlated.
    """

    def __init__(self, spec: CFAModelSpec):
        self.items = spec.item_ids
        self.factors = spec.factor_ids
        self.k = len(self.items)
        self.q = len(self.factors)
        findex = {f: j for j, f in enumerate(self.factors)}
        self.rows = np.arange(self.k)
        self.cols = np.array([findex[spec.structure[i]] for i in self.items])
        self.correlated = spec.correlated and self.q > 1
        self.triu = np.triu_indices(self.q, 1)
        self.n_corr = self.q * (self.q - 1) // 2 if self.correlated else 0
        self.n_params = 2 * self.k + self.n_corr

    def start(self) -> np.ndarray:
        return np.concatenate(
            [
                np.full(self.k, START_LOADING),
                np.full(self.k, START_RESIDUAL),
                np.full(self.n_corr, START_FACTOR_CORR),
            ]
        )

    def bounds(self) -> list[tuple[float | None, float | None]]:
        return (
            [(None, None)] * self.k
            + [(PSI_FLOOR, None)] * self.k
            + [(-0.999, 0.999)] * self.n_corr
        )

    def unpack(self, x: np.ndarray):
        lam = x[: self.k]
        psi = x[self.k : 2 * self.k]
        Phi = np.eye(self.q)
        if self.correlated:
            rho = x[2 * self.k :]
            Phi[self.triu] = rho
            Phi.T[self.triu] = rho
        return lam, psi, Phi

    def implied(self, x: np.ndarray):
        lam, psi, Phi = self.unpack(x)
        L = np.zeros((self.k, self.q))
        L[self.rows, self.cols] = lam
        Sigma = L @ Phi @ L.T + np.diag(psi)
        return Sigma, L, psi, Phi


def discrepancy_and_gradient(
    x: np.ndarray, S: np.ndarray, spec: CFAModelSpec
) -> tuple[float, np.ndarray]:
    """ML discrepancy and its analytic gradient at parameter vector x.

    With G = Sigma^-1 (Sigma - S) Sigma^-1:
        dF/dlambda_i = 2 (G Lambda Phi)[i, f(i)]
        dF/dpsi_i    = G[i, i]
        dF/dphi_ab   = 2 (Lambda' G Lambda)[a, b]      (a < b)

    Non-positive-definite Sigma returns a large penalty value, which
    makes the line search back off rather than crash.
    """
    par = _Parameterization(spec)
    Sigma, L, psi, Phi = par.implied(x)
    sign, logdet = np.linalg.slogdet(Sigma)
    if sign <= 0 or not np.isfinite(logdet):
        return _PD_PENALTY, np.zeros_like(x)
    Si = np.linalg.inv(Sigma)
    sign_s, logdet_s = np.linalg.slogdet(S)
    f = float(logdet + np.trace(S @ Si) - logdet_s - par.k)
    G = Si - Si @ S @ Si
    grad_lam = 2.0 * (G @ L @ Phi)[par.rows, par.cols]
    grad_psi = np.diag(G).copy()
    parts = [grad_lam, grad_psi]
    if par.correlated:
        M = L.T @ G @ L
        parts.append(2.0 * M[par.triu])
    return f, np.concatenate(parts)


def discrepancy(x: np.ndarray, S: np.ndarray, spec: CFAModelSpec) -> float:
    return discrepancy_and_gradient(x, S, spec)[0]


@dataclass(frozen=True)
class FitIndices:
    rmsea: float
    cfi: float
    tli: float
    srmr: float
    chi_square_baseline: float
    df_baseline: int
    defined: bool

    def to_dict(self) -> dict:
        def _num(v):
            return None if (isinstance(v, float) and math.isnan(v)) else v

        return {
            "rmsea": _num(self.rmsea),
            "cfi": _num(self.cfi),
            "tli": _num(self.tli),
            "srmr": _num(self.srmr),
            "chi_square_baseline": self.chi_square_baseline,
            "df_baseline": self.df_baseline,
            "defined": self.defined,
        }


@dataclass(frozen=True)
class CFAFit:
    """A fitted CFA solution with its fit statistics."""

    model: FactorModel
    discrepancy: float
    chi_square: float
    df: int
    n: int
    converged: bool
    iterations: int
    gradient_norm: float
    bound_active: tuple[str, ...]
    fit_indices: FitIndices | None = field(default=None)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "discrepancy": self.discrepancy,
            "chi_square": self.chi_square,
            "df": self.df,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "bound_active": list(self.bound_active),
            "fit_indices": self.fit_indices.to_dict() if self.fit_indices else None,
        }


def _check_covariance(S: np.ndarray, k: int) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.shape != (k, k):
        raise ValueError(f"covariance must be {k} x {k}")
    S = (S + S.T) / 2.0
    sign, _ = np.linalg.slogdet(S)
    if sign <= 0 or np.min(np.linalg.eigvalsh(S)) <= 1e-12:
        raise SingularCovarianceError("sample covariance is singular or not positive definite")
    return S


def cfa_fit(
    S: np.ndarray,
    spec: CFAModelSpec,
    n: int,
    item_ids: tuple[str, ...] | None = None,
) -> CFAFit:
    """Fit the hypothesized model to sample covariance S (n observations).

    Quasi-Newton (L-BFGS-B) descent from fixed interior start values;
    convergence means the projected gradient infinity-norm is at or
    below GRADIENT_TOL within MAX_ITERATIONS iterations. A
    non-converged solution is still returned, flagged, never raised.
    Items whose residual variance ends on the PSI_FLOOR bound are
    reported in ``bound_active``.
    """
    par = _Parameterization(spec)
    if item_ids is not None:
        if tuple(sorted(item_ids)) != par.items:
            raise ValueError("item_ids do not match the model specification")
    S = _check_covariance(S, par.k)

    # the optimizer runs two orders tighter than the convergence flag:
    # near-zero loadings sit in a locally quartic region where a 1e-6
    # projected gradient still allows |lambda| ~ 1e-3
    res = minimize(
        discrepancy_and_gradient,
        par.start(),
        args=(S, spec),
        jac=True,
        method="L-BFGS-B",
        bounds=par.bounds(),
        options={"maxiter": MAX_ITERATIONS, "ftol": 1e-15, "gtol": GRADIENT_TOL * 1e-2},
    )

    x = res.x
    _, grad = discrepancy_and_gradient(x, S, spec)
    # projected gradient: zero out components pushing into an active bound
    proj = grad.copy()
    for i, (lo, hi) in enumerate(par.bounds()):
        if lo is not None and x[i] <= lo + 1e-12 and proj[i] > 0:
            proj[i] = 0.0
        if hi is not None and x[i] >= hi - 1e-12 and proj[i] < 0:
            proj[i] = 0.0
    gnorm = float(np.max(np.abs(proj)))
    converged = gnorm <= GRADIENT_TOL and int(res.nit) <= MAX_ITERATIONS

    _, L, psi, Phi = par.implied(x)
    psi = np.maximum(psi, PSI_FLOOR)
    bound_active = tuple(
        par.items[i] for i in range(par.k) if psi[i] <= PSI_FLOOR + 1e-12
    )
    L, Phi = canonicalize_signs(L, Phi)

    model = FactorModel(
        item_ids=par.items,
        factor_ids=par.factors,
        loadings=L,
        residual_variances=psi,
        factor_correlations=Phi,
        structure=dict(spec.structure),
    )
    f_val = float(discrepancy(x, S, spec))
    df = par.k * (par.k + 1) // 2 - par.n_params
    return CFAFit(
        model=model,
        discrepancy=f_val,
        chi_square=(n - 1) * f_val,
        df=df,
        n=n,
        converged=bool(converged),
        iterations=int(res.nit),
        gradient_norm=gnorm,
        bound_active=bound_active,
    )


def baseline_chi_square(S: np.ndarray, n: int) -> tuple[float, int]:
    """Independence (diagonal Sigma) baseline: chi2 and df.

    The diagonal model's ML solution is sigma_ii = s_ii, so its
    discrepancy reduces to sum(ln s_ii) - ln|S|.
    """
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    sign, logdet = np.linalg.slogdet(S)
    if sign <= 0:
        raise SingularCovarianceError("sample covariance is singular")
    f_b = float(np.sum(np.log(np.diag(S))) - logdet)
    df_b = k * (k - 1) // 2
    return (n - 1) * f_b, df_b


def compute_fit_indices(
    chi_square: float,
    df: int,
    chi_square_baseline: float,
    df_baseline: int,
    n: int,
    srmr: float,
) -> FitIndices:
    """Assemble RMSEA/CFI/TLI from chi-square quantities.

    A saturated model (df = 0) has no defined indices and is reported
    with NaN markers and defined = False.
    """
    if df <= 0 or df_baseline <= 0:
        return FitIndices(
            rmsea=float("nan"),
            cfi=float("nan"),
            tli=float("nan"),
            srmr=srmr if df > 0 else float("nan"),
            chi_square_baseline=chi_square_baseline,
            df_baseline=df_baseline,
            defined=False,
        )
    rmsea = math.sqrt(max(chi_square - df, 0.0) / (df * (n - 1)))
    num = max(chi_square - df, 0.0)
    den = max(chi_square_baseline - df_baseline, chi_square - df, 0.0)
    cfi = 1.0 if num == 0.0 else 1.0 - num / den
    cb = chi_square_baseline / df_baseline
    c = chi_square / df
    tli = float("nan") if cb == 1.0 else (cb - c) / (cb - 1.0)
    return FitIndices(
        rmsea=rmsea,
        cfi=cfi,
        tli=tli,
        srmr=srmr,
        chi_square_baseline=chi_square_baseline,
        df_baseline=df_baseline,
        defined=True,
    )


def srmr_value(S: np.ndarray, Sigma: np.ndarray) -> float:
    """Root mean square standardized residual over the lower triangle
    including the diagonal."""
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    d = np.sqrt(np.diag(S))
    resid = (S - Sigma) / np.outer(d, d)
    il = np.tril_indices(k)
    return float(np.sqrt(np.mean(resid[il] ** 2)))


def fit_indices(fit: CFAFit, S: np.ndarray, n: int) -> FitIndices:
    """RMSEA/CFI/TLI/SRMR for a fitted model.

    chi2 = (n - 1) F against the internally fitted diagonal baseline.
    """
    chi2_b, df_b = baseline_chi_square(S, n)
    srmr = srmr_value(S, fit.model.implied_cov())
    return compute_fit_indices(fit.chi_square, fit.df, chi2_b, df_b, n, srmr)


def with_fit_indices(fit: CFAFit, S: np.ndarray, n: int) -> CFAFit:
    """Copy of ``fit`` with its fit indices attached."""
    return replace(fit, fit_indices=fit_indices(fit, S, n))
