import math

import numpy as np
import pytest

from malalab.estimation import (ErmConfig, empirical_gram_precond,
                                empirical_hessian_precond, matrix_from_csv,
                                matrix_to_csv, minimize_empirical_risk)
from malalab.targets import (Dataset, GibbsSpec, LossOracle, UniformBoxPrior,
                             check_loss_oracle, squared_loss_oracle)


def _spec(X, Y, loss, half=10.0):
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    prior = UniformBoxPrior(lo=np.full(d, -half), hi=np.full(d, half))
    return GibbsSpec(data=Dataset(covariates=X, responses=np.asarray(Y, dtype=float)),
                     loss=loss, prior=prior)


def _grid_risk_min(spec, lo, hi, points):
    grid = np.linspace(lo, hi, points)
    vals = [spec.empirical_risk(np.array([g])) for g in grid]
    return grid[int(np.argmin(vals))], min(vals)


def test_intercept_only_median():
    spec = _spec(np.ones((3, 1)), [1.0, 2.0, 3.0], check_loss_oracle(0.5))
    res = minimize_empirical_risk(spec, np.zeros(1))
    g_theta, g_risk = _grid_risk_min(spec, 0.0, 4.0, 10000)
    assert abs(res.theta[0] - 2.0) <= 1e-3
    assert abs(g_theta - 2.0) <= 1e-3
    assert res.risk <= g_risk + 1e-6


def test_single_datum_check_loss():
    spec = _spec(np.ones((1, 1)), [1.7], check_loss_oracle(0.3))
    res = minimize_empirical_risk(spec, np.zeros(1), ErmConfig(max_iters=20000))
    assert abs(res.theta[0] - 1.7) <= 1e-2


def test_squared_loss_matches_normal_equations():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((40, 3))
    Y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.standard_normal(40)
    spec = _spec(X, Y, squared_loss_oracle())
    res = minimize_empirical_risk(spec, np.zeros(3), ErmConfig(max_iters=20000))
    ols = np.linalg.solve(X.T @ X, X.T @ Y)
    risk_ols = spec.empirical_risk(ols)
    assert abs(res.risk - risk_ols) <= 1e-6


def test_two_dim_check_loss_grid_oracle():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((60, 2))
    Y = X @ np.array([0.5, -1.0]) + rng.standard_normal(60)
    spec = _spec(X, Y, check_loss_oracle(0.5))
    res = minimize_empirical_risk(spec, np.zeros(2), ErmConfig(max_iters=20000))
    g1 = np.linspace(res.theta[0] - 0.5, res.theta[0] + 0.5, 100)
    g2 = np.linspace(res.theta[1] - 0.5, res.theta[1] + 0.5, 100)
    best = min(spec.empirical_risk(np.array([a, b])) for a in g1 for b in g2)
    assert res.risk - best <= 1e-3


def test_erm_monotone_envelope_and_no_regression():
    spec = _spec(np.ones((3, 1)), [1.0, 2.0, 3.0], check_loss_oracle(0.25))
    init = np.array([4.0])
    res = minimize_empirical_risk(spec, init, ErmConfig(max_iters=500))
    assert np.all(np.diff(res.best_risk_path) <= 0)
    assert res.risk <= spec.empirical_risk(init)


def test_erm_config_validation():
    with pytest.raises(ValueError):
        ErmConfig(max_iters=0)
    with pytest.raises(ValueError):
        ErmConfig(step_c=0.0)


def test_erm_nonfinite_risk_error():
    blower = LossOracle(name="blow", value=lambda x, y, th: math.inf,
                        subgrad=lambda x, y, th: np.zeros_like(th))
    spec = _spec(np.ones((2, 1)), [0.0, 1.0], blower)
    with pytest.raises(ValueError):
        minimize_empirical_risk(spec, np.zeros(1), ErmConfig(max_iters=5))


def test_gram_precond_basis_rows():
    data = Dataset(covariates=np.eye(2), responses=np.zeros(2))
    np.testing.assert_allclose(empirical_gram_precond(data), 2.0 * np.eye(2),
                               rtol=0, atol=1e-12)


def test_gram_precond_rank_deficient():
    data = Dataset(covariates=np.ones((4, 2)), responses=np.zeros(4))
    with pytest.raises(ValueError, match="rank deficient"):
        empirical_gram_precond(data)


def test_gram_precond_covariate_scaling():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 3))
    base = empirical_gram_precond(Dataset(covariates=X, responses=np.zeros(30)))
    scaled = empirical_gram_precond(Dataset(covariates=3.0 * X, responses=np.zeros(30)))
    np.testing.assert_allclose(scaled, base / 9.0, rtol=1e-10)


def test_hessian_precond_squared_loss_equals_gram():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((20, 2))
    spec = _spec(X, np.zeros(20), squared_loss_oracle())
    h = empirical_hessian_precond(spec, np.zeros(2))
    g = empirical_gram_precond(spec.data)
    np.testing.assert_allclose(h, g, rtol=1e-10)


def test_hessian_precond_hand_average():
    # 1-d squared loss: per-datum Hessian x^2, data {sqrt(2), 2} -> mean 3
    X = np.array([[math.sqrt(2.0)], [2.0]])
    spec = _spec(X, np.zeros(2), squared_loss_oracle())
    h = empirical_hessian_precond(spec, np.zeros(1))
    assert math.isclose(h[0, 0], 1.0 / 3.0, rel_tol=1e-12)


def test_hessian_precond_identity():
    X = np.eye(3) * math.sqrt(3.0)  # Hessians average to I
    spec = _spec(X, np.zeros(3), squared_loss_oracle())
    np.testing.assert_allclose(empirical_hessian_precond(spec, np.zeros(3)),
                               np.eye(3), rtol=1e-10)


def test_hessian_precond_requires_hessian_oracle():
    spec = _spec(np.ones((2, 1)), [0.0, 1.0], check_loss_oracle(0.5))
    with pytest.raises(ValueError, match="Hessian"):
        empirical_hessian_precond(spec, np.zeros(1))


def test_matrix_csv_roundtrip(tmp_path):
    m = np.array([[1.0, -2.5e-17], [3.0, 4.0]])
    path = tmp_path / "m.csv"
    matrix_to_csv(m, path)
    np.testing.assert_array_equal(matrix_from_csv(path), m)
    matrix_to_csv(np.array([1.0, 2.0]), path)
    assert matrix_from_csv(path).shape == (1, 2)
