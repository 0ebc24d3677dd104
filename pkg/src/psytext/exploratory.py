"""Exploratory factor analysis: principal axis or ML extraction, with
varimax (orthogonal) and oblimin (oblique) rotation via gradient
projection.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError
from .factor_model import PSI_FLOOR, FactorModel, canonicalize_signs

COMMUNALITY_TOL = 1e-8
COMMUNALITY_MAX_ITER = 1000
ROTATION_TOL = 1e-10
ROTATION_MAX_ITER = 2000
N_ROTATION_STARTS = 5


def _check_correlation(corr: np.ndarray) -> np.ndarray:
    R = np.asarray(corr, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(R, R.T, atol=1e-8):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(R), 1.0, atol=1e-8):
        raise ValueError("correlation matrix must have a unit diagonal")
    return (R + R.T) / 2.0


def _smc(R: np.ndarray) -> np.ndarray:
    """Squared multiple correlations, the standard communality start."""
    Rinv = np.linalg.pinv(R)
    d = np.diag(Rinv)
    with np.errstate(divide="ignore"):
        smc = 1.0 - 1.0 / d
    return np.clip(smc, 0.0, 1.0)


def _principal_axis(R: np.ndarray, q: int) -> tuple[np.ndarray, int]:
    """Iterated-communality principal axis factoring.

    Replaces the diagonal of R with current communalities, takes the
    top-q eigenpairs, and iterates until the communalities move less
    than COMMUNALITY_TOL.
    """
    k = R.shape[0]
    h = _smc(R)
    for it in range(1, COMMUNALITY_MAX_ITER + 1):
        Rr = R.copy()
        Rr[np.diag_indices(k)] = h
        w, V = np.linalg.eigh(Rr)
        order = np.argsort(w)[::-1][:q]
        lam = V[:, order] * np.sqrt(np.clip(w[order], 0.0, None))
        h_new = np.clip((lam**2).sum(axis=1), 0.0, 1.0)
        if np.max(np.abs(h_new - h)) < COMMUNALITY_TOL:
            return lam, it
        h = h_new
    raise ConvergenceError(
        f"communality iteration did not converge in {COMMUNALITY_MAX_ITER} iterations"
    )


def _ml_extract(R: np.ndarray, q: int) -> tuple[np.ndarray, int]:
    """Maximum-likelihood extraction with uniquenesses profiled out.

    For fixed uniquenesses psi the optimal loadings come from the
    eigendecomposition of psi^(-1/2) R psi^(-1/2); the discrepancy then
    depends only on the k - q smallest eigenvalues, and we minimize it
    over log psi.
    """
    k = R.shape[0]

    def profile_f(log_psi):
        psi = np.exp(log_psi)
        s = 1.0 / np.sqrt(psi)
        Rs = R * np.outer(s, s)
        w = np.sort(np.linalg.eigvalsh(Rs))[::-1]
        tail = np.clip(w[q:], 1e-12, None)
        return float(np.sum(tail - np.log(tail) - 1.0))

    psi0 = np.clip(1.0 - _smc(R), 0.05, 1.0)
    res = minimize(
        profile_f,
        np.log(psi0),
        method="L-BFGS-B",
        bounds=[(np.log(PSI_FLOOR), np.log(1.0))] * k,
        options={"maxiter": 500, "ftol": 1e-14},
    )
    psi = np.exp(res.x)
    s = 1.0 / np.sqrt(psi)
    Rs = R * np.outer(s, s)
    w, V = np.linalg.eigh(Rs)
    order = np.argsort(w)[::-1][:q]
    gain = np.sqrt(np.clip(w[order] - 1.0, 0.0, None))
    lam = np.sqrt(psi)[:, None] * V[:, order] * gain
    return lam, int(res.nit)


def _vgQ_varimax(L: np.ndarray) -> tuple[float, np.ndarray]:
    L2 = L**2
    X = L2 - L2.mean(axis=0)
    return float(-np.sum(L2 * X) / 4.0), -L * X


def _vgQ_oblimin(L: np.ndarray, gamma: float = 0.0) -> tuple[float, np.ndarray]:
    p, q = L.shape
    L2 = L**2
    N = np.ones((q, q)) - np.eye(q)
    if gamma != 0.0:
        X = (np.eye(p) - gamma * np.ones((p, p)) / p) @ L2 @ N
    else:
        X = L2 @ N
    return float(np.sum(L2 * X) / 4.0), L * X


def _gpa(A: np.ndarray, vgQ, oblique: bool, T0: np.ndarray):
    """Gradient projection rotation from one starting transform.

    Stops when the projected gradient norm falls below ROTATION_TOL or
    when the line search can no longer improve the criterion (the
    solution is then optimal to machine precision even if the norm
    target was not reached).
    """
    T = T0.copy()
    al = 1.0
    if oblique:
        Ti = np.linalg.inv(T)
        L = A @ Ti.T
        f, Gq = vgQ(L)
        G = -((L.T @ Gq) @ Ti).T
    else:
        L = A @ T
        f, Gq = vgQ(L)
        G = A.T @ Gq

    s = np.inf
    for _ in range(ROTATION_MAX_ITER):
        if oblique:
            Gp = G - T @ np.diag(np.sum(T * G, axis=0))
        else:
            M = T.T @ G
            Gp = G - T @ ((M + M.T) / 2.0)
        s = float(np.linalg.norm(Gp, "fro"))
        if s < ROTATION_TOL:
            break
        al *= 2.0
        accepted = False
        for _ in range(30):
            X = T - al * Gp
            if oblique:
                Tt = X / np.sqrt(np.sum(X**2, axis=0))
                Ti = np.linalg.inv(Tt)
                Lt = A @ Ti.T
            else:
                U, _, Vt = np.linalg.svd(X, full_matrices=False)
                Tt = U @ Vt
                Lt = A @ Tt
            ft, Gqt = vgQ(Lt)
            if ft < f - 0.5 * s * s * al:
                accepted = True
                break
            al /= 2.0
        if not accepted and not ft < f:
            break  # no step improves: optimal to machine precision
        T, f, L = Tt, ft, Lt
        if oblique:
            G = -((L.T @ Gqt) @ np.linalg.inv(T)).T
        else:
            G = A.T @ Gqt
    return L, T, f, s


def _rotate(A: np.ndarray, rotation: str) -> tuple[np.ndarray, np.ndarray]:
    """Rotate loadings; returns (pattern loadings, factor correlations).

    Runs GPA from the identity plus several seeded random starts and
    keeps the best criterion value: symmetric loading configurations
    (equal blocks, equal loadings) put the identity start on a saddle
    point from which the projection cannot escape.
    """
    q = A.shape[1]
    if rotation == "none" or q == 1:
        return A, np.eye(q)
    if rotation == "varimax":
        vgQ, oblique = _vgQ_varimax, False
    elif rotation == "oblimin":
        vgQ, oblique = _vgQ_oblimin, True
    else:
        raise ValueError(f"unknown rotation {rotation!r}")

    rng = np.random.default_rng(1729)
    starts = [np.eye(q)]
    for _ in range(N_ROTATION_STARTS - 1):
        Q, _ = np.linalg.qr(rng.standard_normal((q, q)))
        starts.append(Q)

    best = None
    for T0 in starts:
        L, T, f, s = _gpa(A, vgQ, oblique, T0)
        if best is None or f < best[2] - 1e-15:
            best = (L, T, f, s)
    L, T, _, _ = best
    Phi = T.T @ T if oblique else np.eye(q)
    return L, Phi


def _order_factors(L: np.ndarray, Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic factor order: explained variance desc, then first
    anchoring item index. Breaks the tie between symmetric factors."""
    ssq = (L**2).sum(axis=0)
    anchor = np.argmax(np.abs(L), axis=0)
    order = sorted(range(L.shape[1]), key=lambda j: (-round(ssq[j], 10), anchor[j]))
    L2 = L[:, order]
    P2 = Phi[np.ix_(order, order)]
    return L2, P2


def efa(
    corr: np.ndarray,
    n_factors: int,
    method: str = "principal_axis",
    rotation: str = "oblimin",
    item_ids: tuple[str, ...] | None = None,
) -> FactorModel:
    """Exploratory factor analysis of a correlation matrix.

    Parameters
    ----------
    corr : ndarray, shape (k, k)
        Symmetric correlation matrix with unit diagonal.
    n_factors : int
        Number of factors to extract; must be < k.
    method : {"principal_axis", "ml"}
    rotation : {"none", "varimax", "oblimin"}

    Returns
    -------
    FactorModel
        Loadings canonicalized so each factor's largest-magnitude
        loading is positive; uniquenesses floored at PSI_FLOOR.
    """
    R = _check_correlation(corr)
    k = R.shape[0]
    q = int(n_factors)
    if not 1 <= q < k:
        raise ValueError(f"n_factors must be in [1, {k - 1}], got {q}")
    if method == "principal_axis":
        A, _ = _principal_axis(R, q)
    elif method == "ml":
        A, _ = _ml_extract(R, q)
    else:
        raise ValueError(f"unknown extraction method {method!r}")

    L, Phi = _rotate(A, rotation)
    L, Phi = canonicalize_signs(L, Phi)
    L, Phi = _order_factors(L, Phi)

    communality = np.diag(L @ Phi @ L.T)
    psi = np.clip(1.0 - communality, PSI_FLOOR, None)

    ids = item_ids if item_ids is not None else tuple(f"item{i + 1}" for i in range(k))
    factor_ids = tuple(f"F{j + 1}" for j in range(q))
    return FactorModel(
        item_ids=tuple(ids),
        factor_ids=factor_ids,
        loadings=L,
        residual_variances=psi,
        factor_correlations=Phi,
        structure=None,
    )
