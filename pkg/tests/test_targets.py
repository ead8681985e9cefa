import math

import numpy as np
import pytest

from malalab.targets import (Box, ConditionScan, Dataset, GaussianPrior,
                             GibbsSpec, UniformBoxPrior, check_loss,
                             check_loss_oracle, check_loss_subgrad,
                             condition_a_scan, dataset_from_csv,
                             dataset_to_csv, ellipsoid_grid, gaussian_target,
                             get_loss, gibbs_potential, register_loss,
                             rescaled_potential, squared_loss_oracle)


def test_check_loss_values():
    x = np.array([1.0])
    # r = 2 (positive residual): loss = r * tau
    assert check_loss(x, 2.0, np.array([0.0]), 0.25) == 0.5
    # r = -2: loss = r * (tau - 1)
    assert check_loss(x, -2.0, np.array([0.0]), 0.25) == 1.5
    assert check_loss(x, 0.0, np.array([0.0]), 0.3) == 0.0


def test_check_loss_subgrad_and_tie():
    x = np.array([2.0, -1.0])
    theta = np.zeros(2)
    np.testing.assert_allclose(check_loss_subgrad(x, 3.0, theta, 0.25), -0.25 * x)
    np.testing.assert_allclose(check_loss_subgrad(x, -3.0, theta, 0.25), 0.75 * x)
    # zero residual uses the strict indicator: subgradient -tau * x
    np.testing.assert_allclose(check_loss_subgrad(x, 0.0, theta, 0.25), -0.25 * x)


def test_check_loss_convexity_subgradient_inequality():
    # f(b) >= f(a) + g(a) . (b - a) for a convex loss and any subgradient
    rng = np.random.default_rng(7)
    loss = check_loss_oracle(0.3)
    for _ in range(1000):
        x = rng.standard_normal(3)
        y = float(rng.standard_normal())
        a = rng.standard_normal(3)
        b = rng.standard_normal(3)
        fa = loss.value(x, y, a)
        fb = loss.value(x, y, b)
        g = loss.subgrad(x, y, a)
        assert fb >= fa + float(g @ (b - a)) - 1e-12


def test_check_loss_batch_matches_loop():
    rng = np.random.default_rng(3)
    loss = check_loss_oracle(0.6)
    X = rng.standard_normal((40, 2))
    Y = rng.standard_normal(40)
    theta = rng.standard_normal(2)
    by_loop = sum(loss.value(x, y, theta) for x, y in zip(X, Y))
    assert math.isclose(loss.batch_value(X, Y, theta), by_loop, rel_tol=1e-12)
    g_loop = np.sum([loss.subgrad(x, y, theta) for x, y in zip(X, Y)], axis=0)
    np.testing.assert_allclose(loss.batch_subgrad(X, Y, theta), g_loop, rtol=1e-12)


def test_squared_loss():
    loss = squared_loss_oracle()
    x = np.array([1.0, 2.0])
    theta = np.array([1.0, 1.0])
    # r = 5 - 3 = 2
    assert loss.value(x, 5.0, theta) == 2.0
    np.testing.assert_allclose(loss.subgrad(x, 5.0, theta), -2.0 * x)
    np.testing.assert_allclose(loss.hessian(x, 5.0, theta), np.outer(x, x))


def test_squared_loss_finite_difference():
    rng = np.random.default_rng(11)
    loss = squared_loss_oracle()
    h = 1e-5
    for _ in range(100):
        x = rng.standard_normal(2)
        y = float(rng.standard_normal())
        theta = rng.standard_normal(2)
        g = loss.subgrad(x, y, theta)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (loss.value(x, y, theta + e) - loss.value(x, y, theta - e)) / (2 * h)
            assert abs(fd - g[j]) <= 1e-4 * max(1.0, abs(g[j]))


def test_loss_registry():
    assert get_loss("check", tau=0.4).name == "check(tau=0.4)"
    assert get_loss("squared").name == "squared"
    with pytest.raises(ValueError):
        get_loss("absolute")
    with pytest.raises(ValueError):
        register_loss("check", check_loss_oracle)
    with pytest.raises(ValueError):
        check_loss_oracle(0.0)


def test_dataset_validation_and_csv(tmp_path):
    X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    Y = np.array([1.0, -1.0, 0.5])
    data = Dataset(covariates=X, responses=Y)
    assert data.n == 3 and data.dim == 2
    path = tmp_path / "data.csv"
    dataset_to_csv(data, path)
    back = dataset_from_csv(path)
    np.testing.assert_array_equal(back.covariates, X)
    np.testing.assert_array_equal(back.responses, Y)
    with pytest.raises(ValueError):
        Dataset(covariates=np.array([[np.nan]]), responses=np.array([1.0]))
    with pytest.raises(ValueError):
        Dataset(covariates=np.zeros((2, 1)), responses=np.zeros(3))


def test_gaussian_target_value_and_grad():
    precision = np.diag([1.0, 4.0])
    t = gaussian_target(np.zeros(2), precision)
    theta = np.array([2.0, -2.0])
    assert t.potential(theta) == 10.0
    np.testing.assert_array_equal(t.subgrad(theta), np.array([2.0, -8.0]))
    u, g = t.evaluate(theta)
    assert u == 10.0
    np.testing.assert_array_equal(g, np.array([2.0, -8.0]))
    mean, cov = t.known_moments
    np.testing.assert_allclose(cov, np.diag([1.0, 0.25]), atol=1e-12)


def test_uniform_prior_box():
    prior = UniformBoxPrior(lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 2.0]))
    assert prior.log_density(np.array([0.0, 1.5])) == 0.0
    assert prior.log_density(np.array([0.0, 2.5])) == -math.inf
    np.testing.assert_array_equal(prior.grad_log_density(np.zeros(2)), np.zeros(2))
    assert prior.box.contains(np.array([1.0, 2.0]))


def test_gaussian_prior_gradient():
    prior = GaussianPrior(mean=np.array([1.0]), cov=np.array([[4.0]]))
    # d/dtheta log density = -(theta - mean)/var
    np.testing.assert_allclose(prior.grad_log_density(np.array([3.0])), [-0.5])
    assert prior.log_density(np.array([1.0])) > prior.log_density(np.array([3.0]))


def _tiny_spec(tau=0.5, alpha=1.0, half=10.0):
    X = np.array([[1.0], [1.0], [1.0], [1.0]])
    Y = np.zeros(4)
    prior = UniformBoxPrior(lo=np.array([-half]), hi=np.array([half]))
    return GibbsSpec(data=Dataset(covariates=X, responses=Y),
                     loss=check_loss_oracle(tau), prior=prior,
                     learning_rate=alpha)


def test_gibbs_potential_hand_value():
    # all-ones design, zero responses, tau=1/2: U(theta) = 4 * |theta| / 2
    target = gibbs_potential(_tiny_spec())
    assert target.potential(np.array([3.0])) == 6.0
    assert target.potential(np.array([-3.0])) == 6.0
    assert target.potential(np.array([11.0])) == math.inf
    u, g = target.evaluate(np.array([2.0]))
    assert u == 4.0
    np.testing.assert_allclose(g, [2.0])


def test_gibbs_learning_rate_scales_loss_only():
    t1 = gibbs_potential(_tiny_spec(alpha=1.0))
    t2 = gibbs_potential(_tiny_spec(alpha=2.5))
    theta = np.array([1.5])
    assert math.isclose(t2.potential(theta), 2.5 * t1.potential(theta))


def test_rescaled_potential_zero_at_center():
    spec = _tiny_spec()
    local = rescaled_potential(spec, np.array([0.0]))
    assert local.value(np.zeros(1)) == 0.0
    # n = 4: V(xi) = U(xi/2) = 2 |xi| / 2 * 2 = |xi|
    assert local.value(np.array([3.0])) == 3.0
    np.testing.assert_allclose(local.subgrad(np.array([3.0])), [1.0])
    target = local.as_target()
    u, g = target.evaluate(np.array([-3.0]))
    assert u == 3.0
    np.testing.assert_allclose(g, [-1.0])


def test_rescaled_potential_rejects_outside_center():
    spec = _tiny_spec(half=1.0)
    with pytest.raises(ValueError):
        rescaled_potential(spec, np.array([2.0]))


def test_rescaled_center_nonzero():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((20, 2))
    Y = rng.standard_normal(20)
    prior = UniformBoxPrior(lo=np.full(2, -50.0), hi=np.full(2, 50.0))
    spec = GibbsSpec(data=Dataset(covariates=X, responses=Y),
                     loss=squared_loss_oracle(), prior=prior)
    center = np.array([0.3, -0.7])
    local = rescaled_potential(spec, center)
    assert local.value(np.zeros(2)) == 0.0
    xi = np.array([1.0, 2.0])
    base = gibbs_potential(spec)
    expected = base.potential(center + xi / math.sqrt(20)) - base.potential(center)
    assert math.isclose(local.value(xi), expected, rel_tol=1e-12)


def test_ellipsoid_grid_origin_and_bounds():
    pts = ellipsoid_grid(None, 2, 1.0, 0.5)
    assert any(np.all(p == 0.0) for p in pts)
    assert all(float(p @ p) <= 1.0 + 1e-9 for p in pts)
    with pytest.raises(ValueError):
        ellipsoid_grid(None, 4, 1.0, 0.5)
    with pytest.raises(ValueError):
        ellipsoid_grid(None, 2, 1.0, 0.0)


def test_condition_a_scan_gaussian_is_exactly_quadratic():
    J = np.array([[2.0, 0.5], [0.5, 1.0]])
    target = gaussian_target(np.zeros(2), J)
    scan = condition_a_scan(target, J, None, radius=2.0, grid_step=0.5)
    assert scan.eps == 0.0
    assert scan.eps1 == 0.0
    assert scan.quadratic_ok


def test_condition_a_scan_flags_mismatch():
    J = np.eye(1)
    target = gaussian_target(np.zeros(1), 3.0 * J)  # true curvature 3, claimed 1
    scan = condition_a_scan(target, J, None, radius=1.0, grid_step=0.25)
    assert scan.eps > 0.04
    assert not scan.quadratic_ok
    assert scan.eps1 > 0.0


def test_condition_a_scan_origin_only_radius_zero():
    J = np.eye(1)
    target = gaussian_target(np.zeros(1), J)
    scan = condition_a_scan(target, J, None, radius=0.0, grid_step=0.5)
    assert scan == ConditionScan(0.0, 0.0, True)


def test_condition_scan_on_rescaled_check_loss():
    # the kink at the center makes the gradient mismatch order-1 at any radius
    spec = _tiny_spec()
    local = rescaled_potential(spec, np.array([0.0]))
    J = np.array([[1.0]])
    scan = condition_a_scan(local, J, None, radius=1.0, grid_step=0.5)
    assert scan.eps1 > 0.1


def test_box_contains():
    box = Box(lo=np.array([0.0]), hi=np.array([1.0]))
    assert box.contains(np.array([0.5]))
    assert not box.contains(np.array([1.5]))
