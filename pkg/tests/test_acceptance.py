"""Acceptance gate: one test per shipping criterion, each printing a verdict
line and enforcing its runtime budget.  Tolerances are frozen here on purpose;
loosening them is a release decision, not a test fix."""

import math
import time

import numpy as np

from malalab.conductance import (DiscreteChain, chi2_mixing_time,
                                 random_reversible_lazy, s_conductance_profile,
                                 verify_mixing_bound)
from malalab.diagnostics import (effective_sample_size, gelman_rubin,
                                 moment_discrepancy, psrf_raw)
from malalab.estimation import ErmConfig, minimize_empirical_risk
from malalab.experiments import (QuantileExperimentConfig,
                                 run_quantile_experiment, run_scaling_study)
from malalab.linalg import SpdOperator
from malalab.rng import chain_stream
from malalab.samplers import (KIND_MALA, KIND_MRW, ProposalSpec, acceptance,
                              log_q, mala_step_size, pushforward_target,
                              run_chain)
from malalab.targets import (Dataset, GibbsSpec, UniformBoxPrior,
                             check_loss_oracle, gaussian_target,
                             gibbs_potential, squared_loss_oracle)


def _verdict(num: int, ok: bool, detail: str, elapsed: float, budget: float):
    within = elapsed <= budget
    status = "PASS" if (ok and within) else "FAIL"
    print(f"criterion {num}: {status} - {detail} ({elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"criterion {num}: {detail}"
    assert within, f"criterion {num}: runtime {elapsed:.1f}s over budget {budget:.0f}s"


def _check_loss_target(seed=0, n=40, d=2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    Y = X @ np.linspace(1.0, 2.0, d) + rng.standard_normal(n)
    prior = UniformBoxPrior(lo=np.full(d, -20.0), hi=np.full(d, 20.0))
    spec = GibbsSpec(data=Dataset(covariates=X, responses=Y),
                     loss=check_loss_oracle(0.5), prior=prior)
    return gibbs_potential(spec)


def test_criterion_1_detailed_balance():
    start = time.monotonic()
    rng = np.random.default_rng(100)
    m = rng.standard_normal((2, 2))
    spd = m @ m.T + 2.0 * np.eye(2)
    targets = {
        "gaussian": gaussian_target(np.zeros(2), np.array([[1.5, 0.3], [0.3, 0.8]])),
        "check": _check_loss_target(),
    }
    worst = 0.0
    pairs_per_combo = 10000
    for kind in (KIND_MALA, KIND_MRW):
        for precond in (None, spd):
            for target in targets.values():
                spec = ProposalSpec(kind=kind, step=0.2, precond=precond, dim=2)
                xs = rng.standard_normal((pairs_per_combo, 2)) * 1.5
                ys = rng.standard_normal((pairs_per_combo, 2)) * 1.5
                for x, y in zip(xs, ys):
                    lhs = (-target.potential(x) + log_q(spec, target, x, y)
                           + math.log(acceptance(target, spec, x, y)))
                    rhs = (-target.potential(y) + log_q(spec, target, y, x)
                           + math.log(acceptance(target, spec, y, x)))
                    worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-10
    _verdict(1, ok, f"log-flow identity, worst gap {worst:.2e} over "
                    f"8x{pairs_per_combo} pairs", time.monotonic() - start, 10.0)


def test_criterion_2_affine_invariance():
    start = time.monotonic()
    d, n_scale, steps = 3, 4, 10000
    precond = np.diag([4.0, 0.25, 16.0])
    target = gaussian_target(np.zeros(d), np.array([[2.0, 0.5, 0.0],
                                                    [0.5, 1.0, 0.25],
                                                    [0.0, 0.25, 0.75]]))
    h = 0.05
    pre_spec = ProposalSpec(kind=KIND_MALA, step=h, precond=precond, dim=d)
    pre = run_chain(target, pre_spec, np.zeros(d), steps, seed=11, chain_id=0)

    pushed = pushforward_target(target, np.zeros(d), precond, n_scale)
    plain_spec = ProposalSpec(kind=KIND_MALA, step=n_scale * h, dim=d)
    plain = run_chain(pushed, plain_spec, np.zeros(d), steps, seed=11, chain_id=0)

    op = SpdOperator(precond, d)
    root_n = math.sqrt(float(n_scale))
    mapped = np.array([op.apply_sqrt(xi) / root_n for xi in plain.samples])
    identical = np.array_equal(mapped, pre.samples)
    same_events = bool(np.all(pre.events == plain.events))
    _verdict(2, identical and same_events,
             f"preconditioned chain equals mapped plain chain bit-for-bit "
             f"over {steps} steps", time.monotonic() - start, 10.0)


def test_criterion_3_gaussian_stationarity():
    start = time.monotonic()
    worst_mean, worst_cov = 0.0, 0.0
    for d in (2, 10):
        # theorem step with the log terms clamped to zero: h = d^(-1/3)
        h = mala_step_size(d, 1.0, 1.0, m0=1.0, eps=float(d))
        target = gaussian_target(np.zeros(d), np.eye(d))
        spec = ProposalSpec(kind=KIND_MALA, step=h, dim=d)
        trace = run_chain(target, spec, np.zeros(d), 200000, seed=2, chain_id=d)
        mean_err, cov_err = moment_discrepancy(trace, np.zeros(d), np.eye(d))
        worst_mean = max(worst_mean, mean_err)
        worst_cov = max(worst_cov, cov_err)
    ok = worst_mean <= 0.05 and worst_cov <= 0.1
    _verdict(3, ok, f"2e5-step MALA moments: |mean| <= {worst_mean:.3f}, "
                    f"|cov - I| <= {worst_cov:.3f} for d in (2, 10)",
             time.monotonic() - start, 60.0)


def test_criterion_4_conductance_laboratory():
    start = time.monotonic()
    p = 0.25
    chain = DiscreteChain.from_transition(
        np.array([[1.0 - p, p], [p, 1.0 - p]]), reversible=True)
    (pt,) = s_conductance_profile(chain, 0.0, [0.5])
    profile_exact = pt.value == p
    tau_exact = chi2_mixing_time(chain, np.array([1.0, 0.0]), 0.1) == 4.0

    rng = np.random.default_rng(2024)
    all_hold = True
    checked = 0
    for i in range(50):
        m = 2 + i % 9  # sizes 2..10
        res = verify_mixing_bound(random_reversible_lazy(m, rng), m0=2.0, eps=0.1)
        all_hold = all_hold and res.holds
        checked += 1
    ok = profile_exact and tau_exact and all_hold and checked == 50
    _verdict(4, ok, f"two-state profile/mixing closed forms exact; bound holds "
                    f"on {checked}/50 random lazy chains",
             time.monotonic() - start, 120.0)


def test_criterion_5_quantile_study_orderings():
    start = time.monotonic()
    cfg = QuantileExperimentConfig()
    wins_order = wins_factor = wins_ess = 0
    n_seeds = 10
    for seed in range(n_seeds):
        result = run_quantile_experiment(cfg, seed)
        iters = {name: result.arms[name].report.iterations_to_rhat
                 for name in cfg.samplers}
        ess = {name: result.arms[name].report.extra["ess_at_mean"]
               for name in cfg.samplers}
        if iters["mrw"] > iters["mala"] > iters["pmala"]:
            wins_order += 1
        if iters["mrw"] >= 3.0 * iters["pmala"]:
            wins_factor += 1
        if ess["pmala"] > ess["mala"] > ess["mrw"]:
            wins_ess += 1
    ok = wins_order >= 9 and wins_factor >= 8 and wins_ess >= 9
    _verdict(5, ok, f"over {n_seeds} seeds: rhat-iteration ordering {wins_order}/10 "
                    f"(need 9), mrw >= 3x pmala {wins_factor}/10 (need 8), "
                    f"ess ordering {wins_ess}/10 (need 9)",
             time.monotonic() - start, 900.0)


def test_criterion_6_step_size_scaling():
    start = time.monotonic()
    rows = run_scaling_study([2, 8, 32, 128], seed=0, steps=2000)
    scaled = {r.d: r.acceptance for r in rows if r.arm == "scaled"}
    constant = {r.d: r.acceptance for r in rows if r.arm == "constant"}
    scaled_ok = all(scaled[d] >= 0.10 for d in (2, 8, 32, 128))
    collapse_ok = constant[128] < 0.01
    _verdict(6, scaled_ok and collapse_ok,
             f"d^(-1/3) arm acceptance >= {min(scaled.values()):.3f}; "
             f"constant-step arm at d=128 falls to {constant[128]:.4f}",
             time.monotonic() - start, 300.0)


def test_criterion_7_erm_oracles():
    start = time.monotonic()
    # intercept-only median vs a 10^4-point grid oracle
    prior1 = UniformBoxPrior(lo=np.array([-10.0]), hi=np.array([10.0]))
    spec1 = GibbsSpec(data=Dataset(covariates=np.ones((3, 1)),
                                   responses=np.array([1.0, 2.0, 3.0])),
                      loss=check_loss_oracle(0.5), prior=prior1)
    res1 = minimize_empirical_risk(spec1, np.zeros(1))
    grid = np.linspace(0.0, 4.0, 10000)
    grid_best = min(spec1.empirical_risk(np.array([g])) for g in grid)
    median_ok = (abs(res1.theta[0] - 2.0) <= 1e-3
                 and res1.risk <= grid_best + 1e-9)

    rng = np.random.default_rng(77)
    X = rng.standard_normal((50, 3))
    Y = X @ np.array([2.0, -1.0, 0.5]) + 0.3 * rng.standard_normal(50)
    prior2 = UniformBoxPrior(lo=np.full(3, -10.0), hi=np.full(3, 10.0))
    spec2 = GibbsSpec(data=Dataset(covariates=X, responses=Y),
                      loss=squared_loss_oracle(), prior=prior2)
    res2 = minimize_empirical_risk(spec2, np.zeros(3), ErmConfig(max_iters=20000))
    ols_risk = spec2.empirical_risk(np.linalg.solve(X.T @ X, X.T @ Y))
    ols_ok = abs(res2.risk - ols_risk) <= 1e-6
    _verdict(7, median_ok and ols_ok,
             f"median within 1e-3 of grid oracle; squared-loss risk within "
             f"{abs(res2.risk - ols_risk):.1e} of the normal-equation solution",
             time.monotonic() - start, 60.0)


def test_criterion_8_diagnostics_calibration():
    start = time.monotonic()
    rng = np.random.default_rng(5)
    chains = [rng.standard_normal((10000, 1)) for _ in range(4)]
    point, upper = gelman_rubin(chains, 0, 10000)
    rhat_ok = abs(point - 1.0) <= 0.05 and abs(upper - 1.0) <= 0.05

    phi = 0.5
    x = np.empty(100000)
    x[0] = rng.standard_normal() / math.sqrt(1.0 - phi * phi)
    eps = rng.standard_normal(100000 - 1)
    for t in range(1, 100000):
        x[t] = phi * x[t - 1] + eps[t - 1]
    ratio = effective_sample_size(x) / 100000
    ess_ok = abs(ratio - 1.0 / 3.0) <= 0.05

    raw_ok = psrf_raw(np.array([[0.0, 2.0], [1.0, 3.0]])) == math.sqrt(0.75)
    _verdict(8, rhat_ok and ess_ok and raw_ok,
             f"iid-chain shrink factor {point:.3f}; AR(1) ess/n {ratio:.3f} vs 1/3; "
             f"raw kernel returns sqrt(3)/2 exactly",
             time.monotonic() - start, 60.0)
