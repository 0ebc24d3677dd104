import numpy as np
import pytest

import psytext.exploratory as efa_mod
from psytext.exploratory import efa
from psytext.errors import ConvergenceError

from conftest import compound_symmetry


def two_block_matrix(rho_within=0.5, rho_between=0.0, per=3):
    k = 2 * per
    R = np.full((k, k), rho_between)
    R[:per, :per] = rho_within
    R[per:, per:] = rho_within
    np.fill_diagonal(R, 1.0)
    return R


def test_compound_symmetry_exact_one_factor():
    # rho = lambda^2 has the exact representation lambda = sqrt(0.5),
    # psi = 0.5; verified by reconstructing the input matrix
    R = compound_symmetry(3, 0.5)
    model = efa(R, 1, rotation="none")
    assert np.allclose(model.loadings.ravel(), np.sqrt(0.5), atol=1e-6)
    assert np.allclose(model.residual_variances, 0.5, atol=1e-6)
    rec = model.loadings @ model.factor_correlations @ model.loadings.T
    rec += np.diag(model.residual_variances)
    assert np.max(np.abs(rec - R)) < 1e-6


def test_identity_correlation_zero_loadings():
    model = efa(np.eye(3), 1)
    assert np.max(np.abs(model.loadings)) < 1e-6


def test_two_block_varimax_recovers_simple_structure():
    R = two_block_matrix()
    model = efa(R, 2, rotation="varimax")
    L = model.loadings
    for row in range(6):
        own = 0 if row < 3 else 1
        assert L[row, own] >= 0.70
        assert abs(L[row, 1 - own]) < 1e-6
    assert np.allclose(model.factor_correlations, np.eye(2))


def test_two_block_oblimin_recovers_factor_correlation():
    lam = np.zeros((6, 2))
    lam[:3, 0] = lam[3:, 1] = np.sqrt(0.5)
    Phi = np.array([[1.0, 0.3], [0.3, 1.0]])
    R = lam @ Phi @ lam.T + np.diag(1 - 0.5 * np.ones(6))
    model = efa(R, 2, rotation="oblimin")
    assert model.factor_correlations[0, 1] == pytest.approx(0.3, abs=1e-6)
    for row in range(6):
        own = 0 if row < 3 else 1
        assert model.loadings[row, own] == pytest.approx(np.sqrt(0.5), abs=1e-6)
        assert abs(model.loadings[row, 1 - own]) < 1e-6


def test_reconstruction_property_for_exact_models():
    lam = np.zeros((6, 2))
    lam[:3, 0] = (0.9, 0.8, 0.7)
    lam[3:, 1] = (0.85, 0.75, 0.65)
    Phi = np.array([[1.0, 0.4], [0.4, 1.0]])
    R = lam @ Phi @ lam.T + np.diag(1 - np.diag(lam @ Phi @ lam.T))
    model = efa(R, 2, rotation="oblimin")
    rec = model.loadings @ model.factor_correlations @ model.loadings.T
    rec += np.diag(model.residual_variances)
    assert np.max(np.abs(rec - R)) < 1e-6


def test_sign_canonicalization_largest_loading_positive():
    R = compound_symmetry(4, 0.4)
    model = efa(R, 1, rotation="none")
    col = model.loadings[:, 0]
    assert col[np.argmax(np.abs(col))] > 0


def test_ml_extraction_matches_population_on_exact_input():
    R = compound_symmetry(4, 0.49)
    model = efa(R, 1, method="ml", rotation="none")
    assert np.allclose(model.loadings.ravel(), 0.7, atol=1e-4)


def test_q_too_large_rejected():
    with pytest.raises(ValueError, match="n_factors"):
        efa(np.eye(3), 3)
    with pytest.raises(ValueError, match="n_factors"):
        efa(np.eye(3), 0)


def test_invalid_correlation_rejected():
    bad = np.array([[1.0, 2.0], [0.1, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        efa(bad, 1)
    bad2 = compound_symmetry(3, 0.5) * 2.0
    with pytest.raises(ValueError, match="unit diagonal"):
        efa(bad2, 1)


def test_communality_iteration_cap_raises(monkeypatch):
    monkeypatch.setattr(efa_mod, "COMMUNALITY_MAX_ITER", 2)
    R = compound_symmetry(5, 0.5)
    with pytest.raises(ConvergenceError, match="did not converge"):
        efa(R, 1)


def test_item_ids_flow_through():
    R = compound_symmetry(3, 0.5)
    model = efa(R, 1, item_ids=("a", "b", "c"))
    assert model.item_ids == ("a", "b", "c")
    assert model.factor_ids == ("F1",)
