"""Metropolis-adjusted (subgradient) Langevin and random-walk samplers.

Both kernels share one proposal family

    MALA:  y = x - h P grad(U)(x) + sqrt(2 h) P^{1/2} z
    MRW:   y = x + sqrt(2 h) P^{1/2} z

with SPD preconditioner P and physical step h, followed by a
Metropolis-Hastings correction and an optional lazy hold.  The RNG draw order
per step is fixed: one lazy uniform, then exactly d standard normals, then one
accept uniform; this makes traces reproducible draw-for-draw.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .linalg import SpdOperator
from .rng import chain_stream
from .targets import TargetDensity, ellipsoid_grid

KIND_MALA = "mala"
KIND_MRW = "mrw"

EVENT_ACCEPT = "A"
EVENT_REJECT = "R"
EVENT_LAZY = "L"

_MAX_WARM_REJECTIONS = 10**6


@dataclass
class ProposalSpec:
    """Proposal parameters: kind, physical step, preconditioner, laziness."""

    kind: str
    step: float
    precond: Optional[np.ndarray] = None
    lazy: float = 0.0
    dim: Optional[int] = None
    op: SpdOperator = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in (KIND_MALA, KIND_MRW):
            raise ValueError(f"unknown proposal kind {self.kind!r}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if not 0.0 <= self.lazy <= 0.5:
            raise ValueError(f"lazy probability must lie in [0, 1/2], got {self.lazy}")
        if self.precond is not None:
            self.precond = np.asarray(self.precond, dtype=float)
            if self.dim is None:
                self.dim = self.precond.shape[0]
        if self.dim is None:
            raise ValueError("dim is required when no preconditioner is given")
        self.op = SpdOperator(self.precond, self.dim)
        self._sqrt_2h = math.sqrt(2.0 * self.step)
        self._four_h = 4.0 * self.step

    @property
    def needs_grad(self) -> bool:
        return self.kind == KIND_MALA


@dataclass
class ChainState:
    """Current chain position with cached potential/subgradient and counters."""

    position: np.ndarray
    potential_value: float
    grad: Optional[np.ndarray]
    steps: int = 0
    rng: Optional[np.random.Generator] = None

    @classmethod
    def initialize(cls, target: TargetDensity, position: np.ndarray,
                   spec: ProposalSpec, rng: Optional[np.random.Generator] = None) -> "ChainState":
        position = np.atleast_1d(np.asarray(position, dtype=float))
        u, g = target.evaluate(position)
        if not math.isfinite(u):
            raise ValueError("initial state has infinite potential (outside support)")
        if not spec.needs_grad:
            g = None
        return cls(position=position, potential_value=u, grad=g, steps=0, rng=rng)


def _proposal_mean(x: np.ndarray, grad: Optional[np.ndarray], spec: ProposalSpec) -> np.ndarray:
    if spec.kind == KIND_MALA:
        return x - spec.step * spec.op.apply(grad)
    return x


def propose(state: ChainState, spec: ProposalSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one proposal; consumes exactly d standard normal draws."""
    z = rng.standard_normal(state.position.shape[0])
    return _proposal_mean(state.position, state.grad, spec) + spec._sqrt_2h * spec.op.apply_sqrt(z)


def log_q(spec: ProposalSpec, target: TargetDensity, frm: np.ndarray, to: np.ndarray) -> float:
    """Log proposal density log q(frm -> to), normalization constants included."""
    frm = np.asarray(frm, dtype=float)
    to = np.asarray(to, dtype=float)
    d = frm.shape[0]
    grad = target.subgrad(frm) if spec.kind == KIND_MALA else None
    mean = _proposal_mean(frm, grad, spec)
    w = spec.op.apply_inv_sqrt(to - mean)
    quad = -float(w @ w) / spec._four_h
    return quad - 0.5 * d * math.log(4.0 * math.pi * spec.step) - 0.5 * spec.op.log_det


def _log_proposal_ratio(spec: ProposalSpec, x: np.ndarray, y: np.ndarray,
                        g_x: Optional[np.ndarray], g_y: Optional[np.ndarray]) -> float:
    """log q(y -> x) - log q(x -> y); normalization constants cancel exactly."""
    if spec.kind == KIND_MRW:
        return 0.0
    w_xy = spec.op.apply_inv_sqrt(y - (x - spec.step * spec.op.apply(g_x)))
    w_yx = spec.op.apply_inv_sqrt(x - (y - spec.step * spec.op.apply(g_y)))
    return (float(w_xy @ w_xy) - float(w_yx @ w_yx)) / spec._four_h


def acceptance(target: TargetDensity, spec: ProposalSpec, x: np.ndarray, y: np.ndarray) -> float:
    """MH acceptance probability A(x, y) = min(1, f(y) q(y,x) / (f(x) q(x,y)))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u_x, g_x = target.evaluate(x)
    if not math.isfinite(u_x):
        raise ValueError("acceptance evaluated at a current state with U = +inf")
    u_y, g_y = target.evaluate(y)
    if not math.isfinite(u_y):
        return 0.0
    log_ratio = (u_x - u_y) + _log_proposal_ratio(spec, x, y, g_x, g_y)
    return 1.0 if log_ratio >= 0.0 else math.exp(log_ratio)


def step(state: ChainState, spec: ProposalSpec, target: TargetDensity,
         rng: Optional[np.random.Generator] = None) -> tuple[ChainState, str]:
    """Advance one step.  Draw order: lazy uniform, d normals, accept uniform."""
    gen = rng if rng is not None else state.rng
    lazy_u = gen.random()
    if lazy_u < spec.lazy:
        return ChainState(state.position, state.potential_value, state.grad,
                          state.steps + 1, state.rng), EVENT_LAZY
    x = state.position
    z = gen.standard_normal(x.shape[0])
    y = _proposal_mean(x, state.grad, spec) + spec._sqrt_2h * spec.op.apply_sqrt(z)
    u_y, g_y = target.evaluate(y)
    accept_u = gen.random()
    if not math.isfinite(u_y):
        return ChainState(x, state.potential_value, state.grad,
                          state.steps + 1, state.rng), EVENT_REJECT
    if spec.kind == KIND_MALA:
        # forward quadratic comes straight from z: ||(2h)^{-1/2}(y - mean)||^2 = |z|^2 / 2
        fq = -0.5 * float(z @ z)
        w = spec.op.apply_inv_sqrt(x - (y - spec.step * spec.op.apply(g_y)))
        rq = -float(w @ w) / spec._four_h
        log_ratio = (state.potential_value - u_y) + (rq - fq)
    else:
        g_y = None
        log_ratio = state.potential_value - u_y
    if log_ratio >= 0.0 or accept_u <= math.exp(log_ratio):
        return ChainState(y, u_y, g_y, state.steps + 1, state.rng), EVENT_ACCEPT
    return ChainState(x, state.potential_value, state.grad,
                      state.steps + 1, state.rng), EVENT_REJECT


@dataclass
class Trace:
    """Recorded chain output: thinned states, per-record events, and counters."""

    samples: np.ndarray
    events: np.ndarray
    acceptance_rate: float
    chain_id: int = 0
    seed: int = 0
    n_steps: int = 0
    thin: int = 1
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.samples.shape[0]


def run_chain(target: TargetDensity, spec: ProposalSpec, init: np.ndarray,
              n_steps: int, thin: int = 1, seed: int = 0, chain_id: int = 0) -> Trace:
    """Run a chain for n_steps, recording every thin-th state.

    The stream is derived from (seed, chain_id), so identical arguments give
    identical traces.  The initial state is validated but not recorded.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if thin < 1 or thin > n_steps:
        raise ValueError("thin must be a positive integer no larger than n_steps")
    rng = chain_stream(seed, chain_id)
    state = ChainState.initialize(target, init, spec, rng)
    if state.position.shape[0] != target.dim:
        raise ValueError(f"init has dimension {state.position.shape[0]}, target wants {target.dim}")
    k_records = n_steps // thin
    samples = np.empty((k_records, target.dim))
    events = np.empty(k_records, dtype="<U1")
    n_accept = 0
    n_lazy = 0
    rec = 0
    for k in range(1, n_steps + 1):
        state, event = step(state, spec, target, rng)
        if event == EVENT_ACCEPT:
            n_accept += 1
        elif event == EVENT_LAZY:
            n_lazy += 1
        if k % thin == 0:
            samples[rec] = state.position
            events[rec] = event
            rec += 1
    non_lazy = n_steps - n_lazy
    rate = (n_accept / non_lazy) if non_lazy > 0 else math.nan
    return Trace(
        samples=samples,
        events=events,
        acceptance_rate=rate,
        chain_id=chain_id,
        seed=seed,
        n_steps=n_steps,
        thin=thin,
        meta={
            "kind": spec.kind,
            "step": repr(spec.step),
            "lazy": repr(spec.lazy),
            "target": target.label,
        },
    )


# ---------------------------------------------------------------------------
# trace serialization

def _sidecar_path(path) -> str:
    stem, _ = os.path.splitext(os.fspath(path))
    return stem + ".meta.txt"


def trace_to_csv(trace: Trace, path) -> None:
    """Write `step,event,theta_1..theta_d` rows plus a key=value sidecar."""
    d = trace.samples.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "event"] + [f"theta_{i + 1}" for i in range(d)])
        for k in range(trace.samples.shape[0]):
            row = [str((k + 1) * trace.thin), trace.events[k]]
            row += [f"{v:.17g}" for v in trace.samples[k]]
            writer.writerow(row)
    pairs = {
        "seed": trace.seed,
        "chain_id": trace.chain_id,
        "n_steps": trace.n_steps,
        "thin": trace.thin,
        "acceptance_rate": f"{trace.acceptance_rate:.17g}",
    }
    pairs.update(trace.meta)
    with open(_sidecar_path(path), "w") as fh:
        for key in sorted(pairs):
            fh.write(f"{key}={pairs[key]}\n")


def trace_from_csv(path) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["step", "event"]:
            raise ValueError(f"{path}: expected header step,event,theta_1,...")
        d = len(header) - 2
        rows, events = [], []
        for line in reader:
            if not line:
                continue
            events.append(line[1])
            rows.append([float(v) for v in line[2:]])
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    samples = np.array(rows)
    events = np.array(events, dtype="<U1")
    meta = {}
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            for line in fh:
                line = line.strip()
                if line and "=" in line:
                    key, val = line.split("=", 1)
                    meta[key] = val
    n_acc = int(np.sum(events == EVENT_ACCEPT))
    n_rej = int(np.sum(events == EVENT_REJECT))
    rate = n_acc / (n_acc + n_rej) if (n_acc + n_rej) else math.nan
    return Trace(
        samples=samples,
        events=events,
        acceptance_rate=float(meta.get("acceptance_rate", rate)),
        chain_id=int(meta.get("chain_id", 0)),
        seed=int(meta.get("seed", 0)),
        n_steps=int(meta.get("n_steps", samples.shape[0])),
        thin=int(meta.get("thin", 1)),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# step-size rule

def mala_step_size(d: int, rho2: float, kappa: float, m0: float, eps: float,
                   c0: float = 1.0, precond_op_norm: float = 1.0,
                   radius: float = 0.0, eps1: float = 0.0) -> float:
    """Dimension-scaled MALA step

        h = c0 / (rho2 (d^{1/3} + d^{1/4} L^{1/4} + L^{1/2} + |P| R^2 eps1^2)),

    with L = max(0, log(m0 d kappa / eps)).  This is the theoretical step for
    the rescaled potential; divide by n for the physical chain step.
    """
    if d < 1:
        raise ValueError("dimension d must be at least 1")
    for name, val in (("rho2", rho2), ("kappa", kappa), ("m0", m0), ("eps", eps), ("c0", c0)):
        if not (math.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be positive and finite, got {val}")
    for name, val in (("precond_op_norm", precond_op_norm), ("radius", radius), ("eps1", eps1)):
        if not (math.isfinite(val) and val >= 0):
            raise ValueError(f"{name} must be nonnegative and finite, got {val}")
    log_term = max(0.0, math.log(m0 * d * kappa / eps))
    bracket = (
        d ** (1.0 / 3.0)
        + d ** 0.25 * log_term ** 0.25
        + math.sqrt(log_term)
        + precond_op_norm * radius**2 * eps1**2
    )
    return c0 / (rho2 * bracket)


# ---------------------------------------------------------------------------
# warm starts

@dataclass
class WarmStartSpec:
    """Truncated Gaussian start N(center, P/n) conditioned on |z| <= r_trunc."""

    center: np.ndarray
    n: int
    precond: Optional[np.ndarray] = None
    r_trunc: float = math.inf

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.n < 1:
            raise ValueError("sample size n must be at least 1")
        if self.r_trunc <= 0:
            raise ValueError("truncation radius must be positive")
        self.op = SpdOperator(self.precond, self.center.shape[0])
        self._inv_sqrt_n = 1.0 / math.sqrt(self.n)


def warm_start_sample(ws: WarmStartSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw from the truncated warm-start law by rejection."""
    d = ws.center.shape[0]
    for _ in range(_MAX_WARM_REJECTIONS):
        z = rng.standard_normal(d)
        if float(z @ z) <= ws.r_trunc * ws.r_trunc:
            return ws.center + ws._inv_sqrt_n * ws.op.apply_sqrt(z)
    raise ValueError(
        f"warm-start truncation region rejected {_MAX_WARM_REJECTIONS} consecutive draws; "
        "the region has vanishing probability"
    )


class WarmBound(NamedTuple):
    log_m0: float
    mass_term: float
    alignment_term: float
    quadratic_term: float
    weight_ess: float


def warm_bound(local, J: np.ndarray, precond: Optional[np.ndarray], k_radius: float,
               mc_samples: int, seed: int, grid_step: Optional[float] = None) -> WarmBound:
    """Certified warmness of the truncated Gaussian start:

        log M0 <= -log pi_loc(K) + sup_K |xi'(P^{-1} - J) xi| + 2 sup_K |V - quad|

    over K = {xi : |P^{-1/2} xi| <= k_radius}.  The set mass under pi_loc is
    estimated by self-normalized importance sampling from N(0, J^{-1}); the
    sup terms are exhaustive grid scans (dimension <= 3).
    """
    dim = local.dim
    if dim > 3:
        raise ValueError("warm_bound grid scan supports dimension <= 3")
    if mc_samples < 100:
        raise ValueError("mc_samples must be at least 100")
    J = np.asarray(J, dtype=float)
    op = SpdOperator(None if precond is None else np.asarray(precond, dtype=float), dim)
    L = np.linalg.cholesky(J)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    Z = rng.standard_normal((mc_samples, dim))
    XI = np.linalg.solve(L.T, Z.T).T  # rows ~ N(0, J^{-1})
    log_w = np.empty(mc_samples)
    in_k = np.empty(mc_samples, dtype=bool)
    r2 = k_radius * k_radius
    for i in range(mc_samples):
        xi = XI[i]
        log_w[i] = -local.value(xi) + 0.5 * float(xi @ (J @ xi))
        w = op.apply_inv_sqrt(xi)
        in_k[i] = float(w @ w) <= r2
    log_w -= log_w.max()
    w = np.exp(log_w)
    total = float(w.sum())
    ess = total * total / float(w @ w)
    if ess < 10.0:
        raise ValueError(f"importance weights too degenerate (ESS {ess:.2f} < 10); "
                         "the local potential is too far from the Gaussian reference")
    mass = float(w[in_k].sum()) / total
    mass_term = -math.log(mass) if mass > 0 else math.inf

    if grid_step is None:
        extent = k_radius if op.mode == "identity" else k_radius * math.sqrt(
            float(np.max(np.diagonal(op.matrix))))
        grid_step = extent / 25.0
    pts = ellipsoid_grid(None if precond is None else op.matrix, dim, k_radius, grid_step)
    p_inv = op.inverse_matrix()
    misalign = p_inv - J
    align_term = 0.0
    quad_term = 0.0
    for xi in pts:
        align_term = max(align_term, abs(float(xi @ (misalign @ xi))))
        quad_term = max(quad_term, abs(local.value(xi) - 0.5 * float(xi @ (J @ xi))))
    quad_term *= 2.0
    return WarmBound(mass_term + align_term + quad_term, mass_term, align_term, quad_term, ess)


# ---------------------------------------------------------------------------
# affine pushforward

def pushforward_target(target: TargetDensity, center: np.ndarray,
                       precond: Optional[np.ndarray], n: int) -> TargetDensity:
    """The target seen through G(theta) = sqrt(n) P^{-1/2}(theta - center).

    Running a plain (identity-preconditioner) chain with step h on this target
    reproduces, draw for draw, the P-preconditioned chain with step h/n on the
    original target mapped through G.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    op = SpdOperator(None if precond is None else np.asarray(precond, dtype=float),
                     center.shape[0])
    sqrt_n = math.sqrt(float(n))
    u0 = target.potential(center)
    if not math.isfinite(u0):
        raise ValueError("pushforward center lies outside the target support")

    def to_theta(xi):
        return center + op.apply_sqrt(xi) / sqrt_n

    def potential(xi):
        return target.potential(to_theta(xi)) - u0

    def subgrad(xi):
        return op.apply_sqrt(target.subgrad(to_theta(xi))) / sqrt_n

    def fused(xi):
        u, g = target.evaluate(to_theta(xi))
        if g is None:
            return u, None
        return u - u0, op.apply_sqrt(g) / sqrt_n

    return TargetDensity(
        dim=center.shape[0],
        potential=potential,
        subgrad=subgrad,
        support=None,
        value_and_subgrad=fused,
        label=f"pushforward[{target.label}]",
    )


# ---------------------------------------------------------------------------
# acceptance-rate tuning

def autotune_step_coefficient(target: TargetDensity, kind: str,
                              precond: Optional[np.ndarray], init: np.ndarray,
                              base_step: float, seed: int, lazy: float = 0.0,
                              steps: int = 500, band: tuple[float, float] = (0.5, 0.7),
                              c0_bounds: tuple[float, float] = (1e-8, 1e8),
                              max_probes: int = 40) -> tuple[float, float]:
    """Bisect the step coefficient c0 until mean acceptance falls in `band`.

    The physical step is c0 * base_step.  Acceptance decreases in c0, so a
    geometric expansion brackets the band and bisection closes in.  Returns
    (c0, acceptance); if the band is never hit the closest probe wins.
    """
    lo_target, hi_target = band
    if not 0.0 < lo_target < hi_target < 1.0:
        raise ValueError("acceptance band must satisfy 0 < lo < hi < 1")

    def probe(c0: float) -> float:
        spec = ProposalSpec(kind=kind, step=c0 * base_step, precond=precond,
                            lazy=lazy, dim=target.dim)
        trace = run_chain(target, spec, init, steps, thin=1, seed=seed, chain_id=0)
        return trace.acceptance_rate

    lo, hi = None, None  # lo: step too small (acc above mid); hi: step too big
    c0 = 1.0
    best = (math.inf, c0, math.nan)
    best_in_band = None
    mid_target = 0.5 * (lo_target + hi_target)
    inner_tol = 0.03  # keep refining until acceptance sits near band center
    for _ in range(max_probes):
        acc = probe(c0)
        if math.isnan(acc):
            acc = 1.0  # fully lazy probe; treat as sticky and grow the step
        gap = abs(acc - mid_target)
        if gap < best[0]:
            best = (gap, c0, acc)
        if lo_target <= acc <= hi_target:
            if best_in_band is None or gap < best_in_band[0]:
                best_in_band = (gap, c0, acc)
            if gap <= inner_tol:
                return c0, acc
        if acc > mid_target:
            lo = c0
        else:
            hi = c0
        if lo is not None and hi is not None:
            nxt = math.sqrt(lo * hi)
        elif lo is not None:
            nxt = min(lo * 4.0, c0_bounds[1])
        else:
            nxt = max(hi / 4.0, c0_bounds[0])
        if nxt == c0:
            break
        c0 = nxt
    if best_in_band is not None:
        return best_in_band[1], best_in_band[2]
    return best[1], best[2]
