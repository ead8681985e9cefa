"""Finite-state laboratory for conductance profiles and mixing-time bounds.

Everything here is brute force on purpose: subset enumeration for the
s-conductance profile, power iteration of the transition matrix for chi^2
mixing times.  Sizes are desk scale (m <= 20 states) so the combinatorial
bound machinery can be checked exactly against actual mixing behaviour.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
REVERSIBLE_TOL = 1e-10
MIN_LAZINESS = 0.05
MAX_PROFILE_STATES = 20
MAX_BOUND_STATES = 15
MAX_CHI2_ITERS = 10**6


@dataclass
class DiscreteChain:
    """Row-stochastic transition matrix with its stationary distribution."""

    transition: np.ndarray
    stationary: np.ndarray
    reversible: bool = False

    @property
    def size(self) -> int:
        return self.transition.shape[0]

    @property
    def min_holding(self) -> float:
        return float(np.min(np.diagonal(self.transition)))

    @classmethod
    def from_transition(cls, transition: np.ndarray,
                        stationary: Optional[np.ndarray] = None,
                        reversible: bool = False) -> "DiscreteChain":
        T = np.asarray(transition, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError(f"transition matrix must be square, got {T.shape}")
        m = T.shape[0]
        if m < 2:
            raise ValueError("chain needs at least 2 states")
        if np.any(T < -ROW_SUM_TOL):
            raise ValueError("transition matrix has negative entries")
        row_err = float(np.max(np.abs(T.sum(axis=1) - 1.0)))
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 (max error {row_err:.3e})")
        if stationary is None:
            # least squares on the stacked system [T' - I; 1'] pi = [0; 1]
            a = np.vstack([T.T - np.eye(m), np.ones((1, m))])
            b = np.concatenate([np.zeros(m), [1.0]])
            pi = np.linalg.lstsq(a, b, rcond=None)[0]
        else:
            pi = np.asarray(stationary, dtype=float)
        if float(pi.min()) <= 0.0:
            raise ValueError(f"stationary distribution must be strictly positive, "
                             f"got min {pi.min():.3e}")
        pi = pi / pi.sum()
        stat_err = float(np.max(np.abs(pi @ T - pi)))
        if stat_err > STATIONARY_TOL:
            raise ValueError(f"stationary equation violated (max error {stat_err:.3e})")
        if reversible:
            flow = pi[:, None] * T
            rev_err = float(np.max(np.abs(flow - flow.T)))
            if rev_err > REVERSIBLE_TOL:
                raise ValueError(f"detailed balance violated (max error {rev_err:.3e})")
        return cls(transition=T, stationary=pi, reversible=reversible)

    def lazy(self, zeta: float) -> "DiscreteChain":
        if not 0.0 <= zeta <= 0.5:
            raise ValueError("laziness must lie in [0, 1/2]")
        T = zeta * np.eye(self.size) + (1.0 - zeta) * self.transition
        return DiscreteChain(transition=T, stationary=self.stationary.copy(),
                             reversible=self.reversible)


def indices_to_mask(indices: Sequence[int]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


def mask_to_indices(mask: int, m: int) -> list[int]:
    return [i for i in range(m) if mask >> i & 1]


def ergodic_flow(chain: DiscreteChain, subset: Sequence[int]) -> float:
    """phi(S) = sum_{i in S} pi_i sum_{j not in S} T_ij."""
    m = chain.size
    idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if idx.size == 0 or idx.size == m:
        raise ValueError("subset must be proper and nonempty")
    if idx.min() < 0 or idx.max() >= m:
        raise ValueError("subset indices out of range")
    comp = np.setdiff1d(np.arange(m), idx)
    block = chain.transition[np.ix_(idx, comp)]
    return float(chain.stationary[idx] @ block.sum(axis=1))


def _subset_stats(chain: DiscreteChain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Masses and ergodic flows of every proper nonempty subset (by bitmask)."""
    m = chain.size
    if m > MAX_PROFILE_STATES:
        raise ValueError(f"subset enumeration supports m <= {MAX_PROFILE_STATES}, got {m}")
    masks = np.arange(1, (1 << m) - 1, dtype=np.int64)
    flow_matrix = chain.stationary[:, None] * chain.transition
    row_out = flow_matrix.sum(axis=1)
    masses = np.zeros(masks.shape[0])
    flows = np.zeros(masks.shape[0])
    chunk = 1 << 15
    for start in range(0, masks.shape[0], chunk):
        blk = masks[start:start + chunk]
        bits = ((blk[:, None] >> np.arange(m)) & 1).astype(float)
        masses[start:start + chunk] = bits @ chain.stationary
        inner = np.einsum("ki,ij,kj->k", bits, flow_matrix, bits, optimize=True)
        flows[start:start + chunk] = bits @ row_out - inner
    np.maximum(flows, 0.0, out=flows)  # clip ulp-level negatives
    return masks, masses, flows


@dataclass(frozen=True)
class ProfilePoint:
    """One evaluation of the s-conductance profile; argmin_mask is None when
    no subset mass falls in (s, v] (the undefined marker)."""

    v: float
    s: float
    value: float
    argmin_mask: Optional[int]


def s_conductance_profile(chain: DiscreteChain, s: float,
                          v_grid: Sequence[float]) -> list[ProfilePoint]:
    """Exact profile Phi_s(v) = inf { phi(S) / (pi(S) - s) : s < pi(S) <= v }."""
    v_grid = [float(v) for v in v_grid]
    if s < 0:
        raise ValueError("s must be nonnegative")
    if not v_grid:
        raise ValueError("v_grid must be nonempty")
    if min(v_grid) <= s:
        raise ValueError("v_grid values must exceed s")
    if max(v_grid) > 0.5 + 1e-12:
        raise ValueError("v_grid values must not exceed 1/2")
    masks, masses, flows = _subset_stats(chain)
    points = []
    for v in v_grid:
        eligible = (masses > s) & (masses <= v)
        if not np.any(eligible):
            points.append(ProfilePoint(v=v, s=s, value=math.inf, argmin_mask=None))
            continue
        ratios = flows[eligible] / (masses[eligible] - s)
        local = int(np.argmin(ratios))
        points.append(ProfilePoint(v=v, s=s, value=float(ratios[local]),
                                   argmin_mask=int(masks[eligible][local])))
    return points


def profile_to_csv(points: Sequence[ProfilePoint], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "v", "phi", "argmin_bitmask"])
        for p in points:
            writer.writerow([f"{p.s:.17g}", f"{p.v:.17g}", f"{p.value:.17g}",
                             -1 if p.argmin_mask is None else p.argmin_mask])


def chain_to_csv(chain: DiscreteChain, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in chain.transition:
            writer.writerow([f"{v:.17g}" for v in row])


def chain_from_csv(path, reversible: bool = False) -> DiscreteChain:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in line] for line in csv.reader(fh) if line]
    if not rows:
        raise ValueError(f"{path}: empty transition matrix")
    return DiscreteChain.from_transition(np.array(rows), reversible=reversible)


# ---------------------------------------------------------------------------
# chi^2 mixing

def chi2_divergence(mu: np.ndarray, pi: np.ndarray) -> float:
    diff = mu - pi
    return float(diff @ (diff / pi))


def chi2_mixing_time(chain: DiscreteChain, mu0: np.ndarray, eps: float,
                     max_iter: int = MAX_CHI2_ITERS) -> float:
    """Smallest k with chi^2(mu_k, pi) <= eps^2; math.inf past max_iter."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = np.asarray(mu0, dtype=float)
    if mu.shape != chain.stationary.shape:
        raise ValueError("mu0 has wrong length")
    if np.any(mu < -1e-12) or abs(float(mu.sum()) - 1.0) > 1e-9:
        raise ValueError("mu0 must be a probability distribution")
    target = eps * eps
    pi = chain.stationary
    T = chain.transition
    if chi2_divergence(mu, pi) <= target:
        return 0.0
    for k in range(1, max_iter + 1):
        mu = mu @ T
        if chi2_divergence(mu, pi) <= target:
            return float(k)
    return math.inf


def worst_warm_start(pi: np.ndarray, m0: float) -> np.ndarray:
    """The chi^2-maximizing start among mu <= m0 * pi: pack full tilted mass
    onto the lowest-pi states until the budget is spent."""
    if m0 < 1.0:
        raise ValueError("warmness constant m0 must be at least 1")
    pi = np.asarray(pi, dtype=float)
    mu = np.zeros_like(pi)
    remaining = 1.0
    for i in np.argsort(pi, kind="stable"):
        take = min(m0 * pi[i], remaining)
        mu[i] = take
        remaining -= take
        if remaining <= 0.0:
            break
    if remaining > 1e-12:
        raise ValueError("mass packing failed; m0 * sum(pi) < 1?")
    return mu


@dataclass
class MixingBoundResult:
    """Outcome of checking the conductance-profile mixing bound on one chain."""

    tau_actual: Optional[float]
    tau_bound: float
    holds: bool
    s: float
    zeta: float
    m0: float
    eps: float
    infinite_bound: bool
    mu0: np.ndarray


def verify_mixing_bound(chain: DiscreteChain, m0: float, eps: float) -> MixingBoundResult:
    """Check tau(eps; worst m0-warm start) against the profile integral bound

        tau <= (16/zeta) I1 + (64/zeta) log(8 sqrt(2)/eps) / Phi_s(1/2)^2,
        I1 = integral_{4/m0}^{1/2} dv / (v Phi_s(v)^2),   s = eps^2/(16 m0^2),

    with zeta read off as the minimum holding probability.  Phi_s is piecewise
    constant in v, so I1 is computed exactly as a sum of log ratios.  A
    disconnected chain yields an infinite bound (holds vacuously).
    """
    if not chain.reversible:
        raise ValueError("the mixing bound requires a reversible chain")
    if chain.size > MAX_BOUND_STATES:
        raise ValueError(f"bound verification supports m <= {MAX_BOUND_STATES} states")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if m0 < 1.0:
        raise ValueError("m0 must be at least 1")
    zeta = chain.min_holding
    if zeta < MIN_LAZINESS:
        raise ValueError(f"chain is insufficiently lazy (min holding {zeta:.3f} < {MIN_LAZINESS})")
    s = eps * eps / (16.0 * m0 * m0)
    mu0 = worst_warm_start(chain.stationary, m0)

    _, masses, flows = _subset_stats(chain)
    eligible = (masses > s) & (masses <= 0.5)
    if not np.any(eligible):
        raise ValueError("no subset mass lies in (s, 1/2]; the profile is empty")
    el_masses = masses[eligible]
    el_ratios = flows[eligible] / (el_masses - s)
    order = np.argsort(el_masses, kind="stable")
    el_masses = el_masses[order]
    el_ratios = el_ratios[order]
    running_min = np.minimum.accumulate(el_ratios)
    # collapse to breakpoints: profile value on [b_k, b_{k+1}) is running_min at b_k
    uniq_masses, last_pos = [], []
    for i, mass in enumerate(el_masses):
        if uniq_masses and mass == uniq_masses[-1]:
            last_pos[-1] = i
        else:
            uniq_masses.append(float(mass))
            last_pos.append(i)
    phi_steps = [float(running_min[i]) for i in last_pos]
    phi_half = phi_steps[-1]

    infinite = phi_half == 0.0
    if not infinite:
        lo_limit = 4.0 / m0
        integral1 = 0.0
        if lo_limit < 0.5:
            for k, b in enumerate(uniq_masses):
                seg_lo = max(b, lo_limit)
                seg_hi = uniq_masses[k + 1] if k + 1 < len(uniq_masses) else 0.5
                seg_hi = min(seg_hi, 0.5)
                if seg_hi <= seg_lo:
                    continue
                if phi_steps[k] == 0.0:
                    infinite = True
                    break
                integral1 += math.log(seg_hi / seg_lo) / (phi_steps[k] ** 2)
    if infinite:
        return MixingBoundResult(tau_actual=None, tau_bound=math.inf, holds=True,
                                 s=s, zeta=zeta, m0=m0, eps=eps,
                                 infinite_bound=True, mu0=mu0)
    tail = math.log(8.0 * math.sqrt(2.0) / eps) / (phi_half * phi_half)
    tau_bound = (16.0 / zeta) * integral1 + (64.0 / zeta) * tail
    tau_actual = chi2_mixing_time(chain, mu0, eps)
    return MixingBoundResult(tau_actual=tau_actual, tau_bound=tau_bound,
                             holds=bool(tau_actual <= tau_bound), s=s, zeta=zeta,
                             m0=m0, eps=eps, infinite_bound=False, mu0=mu0)


# ---------------------------------------------------------------------------
# chain constructors

def random_reversible_lazy(m: int, rng: np.random.Generator,
                           zeta: float = 0.5) -> DiscreteChain:
    """Random reversible lazy chain: a symmetric proposal Metropolis-ized
    against a random positive target, then zeta-lazied."""
    if m < 2:
        raise ValueError("need at least 2 states")
    pi = rng.uniform(0.2, 1.0, size=m)
    pi = pi / pi.sum()
    w = rng.uniform(0.1, 1.0, size=(m, m))
    w = (w + w.T) / 2.0
    np.fill_diagonal(w, 0.0)
    scale = float(w.sum(axis=1).max()) * (1.0 + 1e-9)
    prop = w / scale
    T = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                T[i, j] = prop[i, j] * min(1.0, pi[j] / pi[i])
        T[i, i] = 1.0 - T[i].sum()
    base = DiscreteChain.from_transition(T, stationary=pi, reversible=True)
    return base.lazy(zeta)


def discretize_mala(target, grid: Sequence[float], spec) -> DiscreteChain:
    """Restrict a 1-d MALA/MRW kernel to a finite grid.

    Proposal densities are renormalized over the grid, the MH acceptance uses
    the renormalized proposals (so detailed balance is exact), the diagonal
    absorbs leftover mass, and the spec's laziness is applied last.  The
    stationary distribution is the grid-restricted target density,
    cross-checked against the left principal eigenvector.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("grid must be a 1-d array with at least 2 points")
    if x.shape[0] > MAX_PROFILE_STATES:
        raise ValueError(f"grid supports at most {MAX_PROFILE_STATES} points")
    if target.dim != 1:
        raise ValueError("grid discretization is for 1-d targets")
    m = x.shape[0]
    u = np.empty(m)
    g = np.empty(m)
    for i in range(m):
        theta = np.array([x[i]])
        ui, gi = target.evaluate(theta)
        if not math.isfinite(ui):
            raise ValueError(f"grid point {x[i]} lies outside the target support")
        u[i] = ui
        g[i] = 0.0 if gi is None else float(gi[0])

    from .samplers import KIND_MALA  # local import to avoid a cycle

    p_scalar = 1.0 if spec.precond is None else float(np.asarray(spec.precond).reshape(()))
    if spec.kind == KIND_MALA:
        means = x - spec.step * p_scalar * g
    else:
        means = x.copy()
    diffs = x[None, :] - means[:, None]
    log_q = -(diffs * diffs) / (4.0 * spec.step * p_scalar)
    log_q -= log_q.max(axis=1, keepdims=True)
    q = np.exp(log_q)
    q /= q.sum(axis=1, keepdims=True)

    f = np.exp(-(u - u.min()))
    ratio = (f[None, :] * q.T) / (f[:, None] * q)
    accept = np.minimum(1.0, ratio)
    T = q * accept
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, 1.0 - T.sum(axis=1))
    if spec.lazy > 0.0:
        T = spec.lazy * np.eye(m) + (1.0 - spec.lazy) * T

    evals, evecs = np.linalg.eig(T.T)
    lead = int(np.argmin(np.abs(evals - 1.0)))
    if abs(evals[lead] - 1.0) > 1e-8:
        raise ValueError("transition matrix has no eigenvalue near 1; eigensolve failed")
    pi_eig = np.real(evecs[:, lead])
    pi_eig = pi_eig / pi_eig.sum()
    pi_target = f / f.sum()
    if float(np.max(np.abs(pi_eig - pi_target))) > 1e-8:
        raise ValueError("stationary eigenvector disagrees with the grid-restricted density")
    # store the density restriction: it satisfies detailed balance to rounding,
    # while the eigenvector carries solver noise
    return DiscreteChain.from_transition(T, stationary=pi_target, reversible=True)
