"""Empirical risk minimization and preconditioner construction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import EIG_FLOOR, spd_inverse
from .targets import Box, GibbsSpec


@dataclass
class ErmConfig:
    """Projected subgradient descent settings: step c/sqrt(t), tail averaging."""

    max_iters: int = 5000
    step_c: float = 1.0
    tol: float = 0.0          # stop early when best risk stalls by less than this
    stall_window: int = 200   # over this many iterations
    averaging: bool = True    # tail (second half) iterate averaging
    box: Optional[Box] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_c <= 0:
            raise ValueError("step_c must be positive")


@dataclass
class ErmResult:
    theta: np.ndarray
    risk: float
    iterations: int
    best_risk_path: np.ndarray  # nonincreasing best-so-far envelope


def minimize_empirical_risk(spec: GibbsSpec, init: np.ndarray,
                            cfg: Optional[ErmConfig] = None) -> ErmResult:
    """Minimize R_n over the prior box by projected subgradient descent.

    Deterministic given init.  Returns whichever of the tail average and the
    best visited iterate has lower risk, so the result never exceeds the
    risk of `init`.
    """
    cfg = cfg or ErmConfig()
    box = cfg.box if cfg.box is not None else spec.prior.box
    theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    if box is not None:
        theta = np.clip(theta, box.lo, box.hi)

    def project(v):
        return np.clip(v, box.lo, box.hi) if box is not None else v

    best_theta = theta.copy()
    best_risk = spec.empirical_risk(theta)
    if not math.isfinite(best_risk):
        raise ValueError(f"non-finite empirical risk {best_risk} at the initial point")
    envelope = np.empty(cfg.max_iters + 1)
    envelope[0] = best_risk
    tail_from = cfg.max_iters // 2
    tail_sum = np.zeros_like(theta)
    tail_count = 0
    last_improvement = 0
    t_final = cfg.max_iters
    for t in range(1, cfg.max_iters + 1):
        g = spec.risk_subgrad(theta)
        theta = project(theta - (cfg.step_c / math.sqrt(t)) * g)
        risk = spec.empirical_risk(theta)
        if not math.isfinite(risk):
            raise ValueError(f"non-finite empirical risk {risk} at iteration {t}")
        if risk < best_risk:
            best_risk = risk
            best_theta = theta.copy()
            last_improvement = t
        envelope[t] = best_risk
        if t > tail_from:
            tail_sum += theta
            tail_count += 1
        if cfg.tol > 0 and t - last_improvement >= cfg.stall_window:
            win_start = max(0, t - cfg.stall_window)
            if envelope[win_start] - envelope[t] < cfg.tol:
                t_final = t
                break
    candidates = [(best_risk, best_theta)]
    if cfg.averaging and tail_count > 0:
        avg = tail_sum / tail_count
        candidates.append((spec.empirical_risk(avg), avg))
    risk, theta_hat = min(candidates, key=lambda c: c[0])
    return ErmResult(theta=theta_hat, risk=risk, iterations=t_final,
                     best_risk_path=envelope[: t_final + 1])


def empirical_gram_precond(data) -> np.ndarray:
    """Inverse empirical Gram matrix (n^{-1} sum x_i x_i')^{-1}.

    Raises when the Gram matrix is numerically rank deficient, naming the
    null direction.
    """
    X = np.asarray(data.covariates if hasattr(data, "covariates") else data, dtype=float)
    gram = (X.T @ X) / X.shape[0]
    evals, evecs = np.linalg.eigh(gram)
    if float(evals.min()) < EIG_FLOOR:
        i = int(np.argmin(evals))
        raise ValueError(
            f"covariates are rank deficient: Gram eigenvalue {evals[i]:.3e} along "
            f"direction {np.round(evecs[:, i], 6)}"
        )
    inv = (evecs / evals) @ evecs.T
    return (inv + inv.T) / 2.0


def empirical_hessian_precond(spec: GibbsSpec, theta_hat: np.ndarray) -> np.ndarray:
    """Inverse averaged loss Hessian (n^{-1} sum Hess_i(theta_hat))^{-1}."""
    if spec.loss.hessian is None:
        raise ValueError(f"loss {spec.loss.name!r} provides no per-datum Hessian")
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    d = spec.data.dim
    avg = np.zeros((d, d))
    for x, y in zip(spec.data.covariates, spec.data.responses):
        avg += spec.loss.hessian(x, y, theta_hat)
    avg /= spec.data.n
    return spd_inverse(avg, "averaged Hessian")


# ---------------------------------------------------------------------------
# matrix serialization (theta_hat vectors and preconditioners)

def matrix_to_csv(mat: np.ndarray, path) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in mat:
            writer.writerow([f"{v:.17g}" for v in row])


def matrix_from_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in line] for line in csv.reader(fh) if line]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows with widths {sorted(widths)}")
    return np.array(rows)
