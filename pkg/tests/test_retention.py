import numpy as np
import pytest

from psytext.errors import InsufficientDataError
from psytext.retention import kaiser_rule, parallel_analysis

from conftest import continuous_matrix


def one_factor_data(n=500, k=6, lam=0.8, seed=11):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(n)
    return np.outer(theta, np.full(k, lam)) + rng.standard_normal((n, k)) * np.sqrt(1 - lam**2)


def two_factor_data(n=500, per=4, lam=0.8, seed=12):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((n, 2))
    X = np.zeros((n, 2 * per))
    noise = np.sqrt(1 - lam**2)
    X[:, :per] = np.outer(theta[:, 0], np.full(per, lam)) + rng.standard_normal((n, per)) * noise
    X[:, per:] = np.outer(theta[:, 1], np.full(per, lam)) + rng.standard_normal((n, per)) * noise
    return X


def test_one_factor_retains_one():
    result = parallel_analysis(continuous_matrix(one_factor_data()), n_reps=100, seed=0)
    assert result.retained == 1


def test_pure_noise_retains_zero():
    rng = np.random.default_rng(101)
    result = parallel_analysis(continuous_matrix(rng.standard_normal((500, 6))), n_reps=100, seed=0)
    assert result.retained == 0


def test_two_independent_factors_retain_two():
    result = parallel_analysis(continuous_matrix(two_factor_data()), n_reps=100, seed=0)
    assert result.retained == 2


def test_deterministic_given_seed():
    m = continuous_matrix(two_factor_data())
    a = parallel_analysis(m, n_reps=50, seed=123)
    b = parallel_analysis(m, n_reps=50, seed=123)
    assert a == b


def test_eigenvalues_sum_to_item_count():
    m = continuous_matrix(two_factor_data())
    result = parallel_analysis(m, n_reps=20, seed=0)
    assert sum(result.observed_eigenvalues) == pytest.approx(8.0, abs=1e-10)
    assert sum(result.reference_eigenvalues) == pytest.approx(8.0, abs=1e-8)


def test_eigenvalues_sorted_descending():
    result = parallel_analysis(continuous_matrix(one_factor_data()), n_reps=20, seed=0)
    obs = list(result.observed_eigenvalues)
    assert obs == sorted(obs, reverse=True)


def test_insufficient_data_raises():
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientDataError):
        parallel_analysis(continuous_matrix(rng.standard_normal((5, 6))), n_reps=10, seed=0)


def test_kaiser_rule_on_strong_factor():
    result = kaiser_rule(continuous_matrix(one_factor_data()))
    assert result.retained == 1
    assert result.rule == "kaiser"
