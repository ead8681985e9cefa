"""Experiment runners: quantile-regression sampler comparison, step-size
scaling study, and batch verification of the conductance mixing bound.

These produce in-memory result objects plus deterministic CSV files (same
config and seed give byte-identical output; no timestamps).  Figures are the
CLI layer's job, not this module's.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conductance import (DiscreteChain, MixingBoundResult, random_reversible_lazy,
                          verify_mixing_bound)
from .diagnostics import (DiagnosticsReport, effective_sample_size, ess_reaches,
                          ess_to_csv, rhat_to_csv, rhat_trajectory)
from .estimation import (ErmConfig, empirical_gram_precond, matrix_to_csv,
                         minimize_empirical_risk)
from .linalg import SpdOperator
from .rng import (DATA_STREAM, INIT_STREAM, MISC_STREAM, WARMUP_STREAM,
                  derive_seed, purpose_stream)
from .samplers import (KIND_MALA, KIND_MRW, ProposalSpec, Trace,
                       autotune_step_coefficient, mala_step_size, run_chain)
from .targets import (Dataset, GibbsSpec, UniformBoxPrior, check_loss_oracle,
                      dataset_to_csv, gaussian_target, gibbs_potential)

SAMPLER_MRW = "mrw"
SAMPLER_MALA = "mala"
SAMPLER_PMALA = "pmala"


@dataclass
class QuantileExperimentConfig:
    """Quantile-regression sampler comparison: data model and run lengths."""

    n: int = 500
    d: int = 5
    tau: float = 0.5
    cov_offdiag: float = 0.2
    error_location: float = 0.0
    error_scale: float = 2.0
    theta_star: Optional[np.ndarray] = None
    box_halfwidth: float = 100.0
    learning_rate: float = 1.0
    samplers: tuple = (SAMPLER_MRW, SAMPLER_MALA, SAMPLER_PMALA)
    m_chains: int = 16  # shrink-factor crossing times need the noise floor low
    max_iters: int = 20000
    rhat_threshold: float = 1.01
    rhat_stride: int = 50
    ess_at: int = 5000
    ess_target: float = 300.0
    ess_stride: int = 250
    spread: float = 5.0
    warmup_steps: int = 500
    accept_band: tuple = (0.5, 0.7)
    erm_iters: int = 5000

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.m_chains < 2:
            raise ValueError("diagnostics need at least 2 chains")
        lo = -1.0 / (self.d - 1) if self.d > 1 else -1.0
        if not lo < self.cov_offdiag < 1.0:
            raise ValueError(f"off-diagonal {self.cov_offdiag} leaves the "
                             f"covariate covariance non-positive-definite")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        if self.error_scale <= 0:
            raise ValueError("error scale must be positive")
        if not 1 <= self.ess_at <= self.max_iters:
            raise ValueError("ess_at must lie in [1, max_iters]")
        unknown = set(self.samplers) - {SAMPLER_MRW, SAMPLER_MALA, SAMPLER_PMALA}
        if unknown:
            raise ValueError(f"unknown samplers: {sorted(unknown)}")

    def resolved_theta_star(self) -> np.ndarray:
        if self.theta_star is not None:
            t = np.asarray(self.theta_star, dtype=float)
            if t.shape != (self.d,):
                raise ValueError("theta_star has wrong shape")
            return t
        return np.arange(1.0, self.d + 1.0)


def laplace_from_uniform(u: np.ndarray, location: float, scale: float) -> np.ndarray:
    """Inverse-CDF Laplace draw from uniforms in [0, 1)."""
    half = np.abs(u - 0.5)
    inner = np.maximum(1.0 - 2.0 * half, np.finfo(float).tiny)
    return location - scale * np.sign(u - 0.5) * np.log(inner)


def make_quantile_data(cfg: QuantileExperimentConfig, rng: np.random.Generator) -> Dataset:
    """Correlated Gaussian covariates, Laplace errors, linear truth."""
    cov = np.full((cfg.d, cfg.d), cfg.cov_offdiag)
    np.fill_diagonal(cov, 1.0)
    chol = np.linalg.cholesky(cov)
    x = rng.standard_normal((cfg.n, cfg.d)) @ chol.T
    errors = laplace_from_uniform(rng.random(cfg.n), cfg.error_location, cfg.error_scale)
    y = x @ cfg.resolved_theta_star() + errors
    return Dataset(covariates=x, responses=y)


@dataclass
class SamplerArm:
    """One sampler's tuned step, chains, and diagnostics."""

    name: str
    kind: str
    c0: float
    step: float
    tune_acceptance: float
    traces: list
    chain_acceptance: np.ndarray
    report: DiagnosticsReport


@dataclass
class QuantileExperimentResult:
    config: QuantileExperimentConfig
    seed: int
    data: Dataset
    theta_hat: np.ndarray
    precond: np.ndarray
    arms: dict = field(default_factory=dict)


def _first_prefix_below(prefixes: np.ndarray, uppers: np.ndarray,
                        threshold: float) -> float:
    """First prefix whose max-coordinate upper shrink factor beats threshold.

    Same semantics as diagnostics.iterations_to_threshold at equal stride.
    """
    for i, p in enumerate(prefixes):
        row = uppers[i]
        if np.all(np.isfinite(row)) and float(row.max()) < threshold:
            return float(p)
    return math.inf


def _ess_iterations(traces: Sequence[Trace], target: float, stride: int,
                    max_iters: int) -> np.ndarray:
    """Per-coordinate mean over chains of the first prefix with ESS >= target."""
    d = traces[0].samples.shape[1]
    m = len(traces)
    firsts = np.full((m, d), math.inf)
    for c, trace in enumerate(traces):
        for j in range(d):
            for k in range(stride, max_iters + 1, stride):
                if ess_reaches(trace.samples[:k], target, coordinate=j):
                    firsts[c, j] = float(k)
                    break
    return firsts.mean(axis=0)


def _arm_kind_precond(name: str, gram_inv: np.ndarray):
    if name == SAMPLER_MRW:
        return KIND_MRW, None
    if name == SAMPLER_MALA:
        return KIND_MALA, None
    return KIND_MALA, gram_inv


def run_quantile_experiment(cfg: QuantileExperimentConfig, seed: int,
                            out_dir: Optional[str] = None) -> QuantileExperimentResult:
    """Full sampler comparison on one synthetic quantile-regression dataset.

    Generates data, fits the check-loss minimizer, tunes each sampler's step
    coefficient during a discarded warmup, runs m chains from shared
    overdispersed starts, and reports shrink-factor trajectories, iterations
    to threshold, ESS at a fixed prefix, and iterations to the ESS target.
    """
    data = make_quantile_data(cfg, purpose_stream(seed, DATA_STREAM))
    prior = UniformBoxPrior(lo=np.full(cfg.d, -cfg.box_halfwidth),
                            hi=np.full(cfg.d, cfg.box_halfwidth))
    spec = GibbsSpec(data=data, loss=check_loss_oracle(cfg.tau), prior=prior,
                     learning_rate=cfg.learning_rate)
    erm = minimize_empirical_risk(spec, np.zeros(cfg.d),
                                  ErmConfig(max_iters=cfg.erm_iters))
    theta_hat = erm.theta
    gram_inv = empirical_gram_precond(data)
    target = gibbs_potential(spec)

    base_step = mala_step_size(cfg.d, 1.0, 1.0, m0=10.0, eps=0.1) / cfg.n
    spread_op = SpdOperator(gram_inv, cfg.d)
    inits = []
    for c in range(cfg.m_chains):
        z = purpose_stream(seed, INIT_STREAM, c).standard_normal(cfg.d)
        inits.append(theta_hat + cfg.spread * spread_op.apply_sqrt(z))

    result = QuantileExperimentResult(config=cfg, seed=seed, data=data,
                                      theta_hat=theta_hat, precond=gram_inv)
    for arm_idx, name in enumerate(cfg.samplers):
        kind, precond = _arm_kind_precond(name, gram_inv)
        c0, tune_acc = autotune_step_coefficient(
            target, kind, precond, theta_hat, base_step,
            seed=derive_seed(seed, WARMUP_STREAM, arm_idx),
            steps=cfg.warmup_steps, band=cfg.accept_band)
        step = c0 * base_step
        pspec = ProposalSpec(kind=kind, step=step, precond=precond, dim=cfg.d)
        traces = [run_chain(target, pspec, inits[c], cfg.max_iters,
                            seed=seed, chain_id=c) for c in range(cfg.m_chains)]
        sample_blocks = [t.samples for t in traces]
        prefixes, points, uppers = rhat_trajectory(sample_blocks, cfg.rhat_stride)
        iters_rhat = _first_prefix_below(prefixes, uppers, cfg.rhat_threshold)
        ess_at = np.array([
            np.mean([effective_sample_size(t.samples[:cfg.ess_at], j) for t in traces])
            for j in range(cfg.d)])
        ess_iters = _ess_iterations(traces, cfg.ess_target, cfg.ess_stride,
                                    cfg.max_iters)
        report = DiagnosticsReport(
            prefixes=prefixes, rhat_point=points, rhat_upper=uppers,
            ess=ess_at, iterations_to_rhat=iters_rhat, ess_prefix=cfg.ess_at,
            extra={"ess_iterations": ess_iters,
                   "ess_iterations_mean": float(np.mean(ess_iters)),
                   "ess_at_mean": float(ess_at.mean())})
        result.arms[name] = SamplerArm(
            name=name, kind=kind, c0=c0, step=step, tune_acceptance=tune_acc,
            traces=traces,
            chain_acceptance=np.array([t.acceptance_rate for t in traces]),
            report=report)

    if out_dir is not None:
        write_quantile_outputs(result, out_dir)
    return result


def write_quantile_outputs(result: QuantileExperimentResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    with open(os.path.join(out_dir, "config.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        items = [("seed", result.seed), ("n", cfg.n), ("d", cfg.d),
                 ("tau", cfg.tau), ("cov_offdiag", cfg.cov_offdiag),
                 ("error_location", cfg.error_location),
                 ("error_scale", cfg.error_scale),
                 ("box_halfwidth", cfg.box_halfwidth),
                 ("learning_rate", cfg.learning_rate),
                 ("m_chains", cfg.m_chains), ("max_iters", cfg.max_iters),
                 ("rhat_threshold", cfg.rhat_threshold),
                 ("rhat_stride", cfg.rhat_stride), ("ess_at", cfg.ess_at),
                 ("ess_target", cfg.ess_target), ("ess_stride", cfg.ess_stride),
                 ("spread", cfg.spread), ("warmup_steps", cfg.warmup_steps),
                 ("accept_band_lo", cfg.accept_band[0]),
                 ("accept_band_hi", cfg.accept_band[1])]
        for key, value in items:
            writer.writerow([key, value])
    dataset_to_csv(result.data, os.path.join(out_dir, "data.csv"))
    matrix_to_csv(result.theta_hat.reshape(1, -1),
                  os.path.join(out_dir, "theta_hat.csv"))
    matrix_to_csv(result.precond, os.path.join(out_dir, "precond.csv"))
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["sampler", "kind", "c0", "step", "tune_acceptance",
                  "chain_acceptance_mean", "iters_to_rhat",
                  "ess_at_mean", "ess_iterations_mean"]
        header += [f"ess_at_{j + 1}" for j in range(cfg.d)]
        header += [f"ess_iters_{j + 1}" for j in range(cfg.d)]
        writer.writerow(header)
        for name in cfg.samplers:
            arm = result.arms[name]
            rep = arm.report
            row = [name, arm.kind, f"{arm.c0:.17g}", f"{arm.step:.17g}",
                   f"{arm.tune_acceptance:.17g}",
                   f"{float(arm.chain_acceptance.mean()):.17g}",
                   f"{rep.iterations_to_rhat:.17g}",
                   f"{rep.extra['ess_at_mean']:.17g}",
                   f"{rep.extra['ess_iterations_mean']:.17g}"]
            row += [f"{v:.17g}" for v in rep.ess]
            row += [f"{v:.17g}" for v in rep.extra["ess_iterations"]]
            writer.writerow(row)
    for name in cfg.samplers:
        arm = result.arms[name]
        rhat_to_csv(arm.report, os.path.join(out_dir, f"rhat_{name}.csv"))
        ess_to_csv(arm.report, os.path.join(out_dir, f"ess_{name}.csv"))


# ---------------------------------------------------------------------------
# dimension scaling study

ARM_SCALED = "scaled"
ARM_CONSTANT = "constant"


@dataclass(frozen=True)
class ScalingRow:
    d: int
    arm: str
    step: float
    acceptance: float
    ess_per_step: float


def run_scaling_study(dims: Sequence[int], seed: int, steps: int = 2000,
                      c0: float = 1.0, include_constant_arm: bool = True,
                      out_path: Optional[str] = None) -> list[ScalingRow]:
    """MALA acceptance on standard Gaussians as dimension grows.

    The scaled arm uses the theoretical step with the log terms clamped to
    zero, so the step is exactly c0 * d^(-1/3); the constant arm freezes the
    smallest dimension's step.  Chains start at exact stationary draws.
    """
    dims = [int(d) for d in dims]
    if dims != sorted(dims) or len(dims) == 0:
        raise ValueError("dims must be nonempty and ascending")
    if dims[0] < 1:
        raise ValueError("dimensions must be positive")
    rows = []
    arms = [ARM_SCALED] + ([ARM_CONSTANT] if include_constant_arm else [])
    h_const = mala_step_size(dims[0], 1.0, 1.0, m0=1.0, eps=float(dims[0]), c0=c0)
    counter = 0
    for arm in arms:
        for d in dims:
            h = (mala_step_size(d, 1.0, 1.0, m0=1.0, eps=float(d), c0=c0)
                 if arm == ARM_SCALED else h_const)
            target = gaussian_target(np.zeros(d), np.eye(d))
            pspec = ProposalSpec(kind=KIND_MALA, step=h, dim=d)
            init = purpose_stream(seed, INIT_STREAM, counter).standard_normal(d)
            trace = run_chain(target, pspec, init, steps,
                              seed=derive_seed(seed, MISC_STREAM, counter),
                              chain_id=0)
            acc = trace.acceptance_rate
            try:
                ess = effective_sample_size(trace, coordinate=0)
            except ValueError:
                ess = 0.0  # frozen chain: no effective samples
            rows.append(ScalingRow(d=d, arm=arm, step=h, acceptance=float(acc),
                                   ess_per_step=float(ess) / steps))
            counter += 1
    if out_path is not None:
        scaling_to_csv(rows, out_path)
    return rows


def scaling_to_csv(rows: Sequence[ScalingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d", "arm", "step", "acceptance", "ess_per_step"])
        for r in rows:
            writer.writerow([r.d, r.arm, f"{r.step:.17g}",
                             f"{r.acceptance:.17g}", f"{r.ess_per_step:.17g}"])


# ---------------------------------------------------------------------------
# conductance verification batches

@dataclass(frozen=True)
class ConductanceRow:
    index: int
    m: int
    zeta: float
    s: float
    tau_actual: float  # nan when skipped (infinite bound)
    tau_bound: float
    holds: bool
    infinite_bound: bool


def disconnected_example_chain() -> DiscreteChain:
    """Two symmetric 2-state blocks with no cross flow, half-lazy."""
    block = np.array([[0.5, 0.5], [0.5, 0.5]])
    T = np.zeros((4, 4))
    T[:2, :2] = block
    T[2:, 2:] = block
    base = DiscreteChain.from_transition(T, stationary=np.full(4, 0.25),
                                         reversible=True)
    return base.lazy(0.5)


def run_conductance_batch(seed: int, count: int, sizes: Sequence[int] = (3, 4, 5, 6, 7, 8),
                          m0: float = 2.0, eps: float = 0.1,
                          include_disconnected: bool = False,
                          out_path: Optional[str] = None) -> list[ConductanceRow]:
    """Verify the mixing bound on `count` random reversible lazy chains."""
    sizes = [int(m) for m in sizes]
    if count < 0:
        raise ValueError("count must be nonnegative")
    if any(m < 2 or m > 15 for m in sizes):
        raise ValueError("sizes must lie in [2, 15]")
    rng = purpose_stream(seed, MISC_STREAM)
    rows = []
    for i in range(count):
        m = sizes[i % len(sizes)]
        chain = random_reversible_lazy(m, rng)
        rows.append(_bound_row(i, verify_mixing_bound(chain, m0, eps)))
    if include_disconnected:
        chain = disconnected_example_chain()
        rows.append(_bound_row(len(rows), verify_mixing_bound(chain, m0, eps)))
    if out_path is not None:
        conductance_to_csv(rows, out_path)
    return rows


def _bound_row(index: int, res: MixingBoundResult) -> ConductanceRow:
    tau_actual = math.nan if res.tau_actual is None else float(res.tau_actual)
    return ConductanceRow(index=index, m=res.mu0.shape[0], zeta=res.zeta,
                          s=res.s, tau_actual=tau_actual,
                          tau_bound=float(res.tau_bound), holds=res.holds,
                          infinite_bound=res.infinite_bound)


def conductance_to_csv(rows: Sequence[ConductanceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "m", "zeta", "s", "tau_actual", "tau_bound",
                         "holds", "infinite_bound"])
        for r in rows:
            writer.writerow([r.index, r.m, f"{r.zeta:.17g}", f"{r.s:.17g}",
                             f"{r.tau_actual:.17g}", f"{r.tau_bound:.17g}",
                             int(r.holds), int(r.infinite_bound)])
