"""Convergence diagnostics: potential scale reduction and effective sample size.

Chains enter these routines as recorded, lazy/rejected repeats included; the
diagnostics see the actual Markov chain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import f as f_dist


def _coordinate_series(chain, coordinate: int) -> np.ndarray:
    samples = getattr(chain, "samples", chain)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        return samples
    return samples[:, coordinate]


def _chain_matrix(chains: Sequence, coordinate: int, prefix_len: int) -> np.ndarray:
    rows = []
    for chain in chains:
        x = _coordinate_series(chain, coordinate)
        if x.shape[0] < prefix_len:
            raise ValueError(f"chain of length {x.shape[0]} shorter than prefix {prefix_len}")
        rows.append(x[:prefix_len])
    return np.array(rows)


def psrf_raw(prefixes: np.ndarray) -> float:
    """Raw scale-reduction kernel sqrt(Vhat / W) on an m x n array.

    No burn-in discard and no degrees-of-freedom correction:
    W = mean within-chain variance, B/n = variance of chain means,
    Vhat = (n-1)/n W + B/n.
    """
    prefixes = np.asarray(prefixes, dtype=float)
    m, n = prefixes.shape
    if m < 2 or n < 2:
        raise ValueError("need at least 2 chains of length at least 2")
    w = float(np.mean(np.var(prefixes, axis=1, ddof=1)))
    if w == 0.0:
        raise ValueError("degenerate chains: within-chain variance is zero")
    b_over_n = float(np.var(np.mean(prefixes, axis=1), ddof=1))
    v_hat = (n - 1) / n * w + b_over_n
    return math.sqrt(v_hat / w)


def gelman_rubin(chains: Sequence, coordinate: int, prefix_len: int) -> tuple[float, float]:
    """Potential scale reduction factor (point, upper) for one coordinate.

    Uses the first `prefix_len` records of each chain, discards the first half
    as burn-in, applies the Brooks-Gelman degrees-of-freedom correction to the
    point estimate, and an F-quantile approximation for the 97.5% upper bound.
    """
    if prefix_len < 4:
        raise ValueError("prefix_len must be at least 4")
    if len(chains) < 2:
        raise ValueError("need at least 2 chains")
    kept = _chain_matrix(chains, coordinate, prefix_len)[:, prefix_len // 2:]
    m, n = kept.shape

    s2 = np.var(kept, axis=1, ddof=1)        # per-chain variances
    xbar = np.mean(kept, axis=1)             # per-chain means
    w = float(np.mean(s2))
    if w == 0.0:
        raise ValueError("degenerate chains: within-chain variance is zero")
    vm = float(np.var(xbar, ddof=1))         # B/n
    v_hat = (n - 1) / n * w + vm

    # Brooks-Gelman variance estimate of v_hat, for the df correction.
    var_s2 = float(np.var(s2, ddof=1))
    grand = float(np.mean(xbar))
    cov_s2_x2 = float(np.cov(s2, xbar**2, ddof=1)[0, 1])
    cov_s2_x = float(np.cov(s2, xbar, ddof=1)[0, 1])
    var_w = var_s2 / m
    var_vm = 2.0 * vm * vm / max(m - 1, 1)
    cov_wv = (cov_s2_x2 - 2.0 * grand * cov_s2_x) / m
    a = (n - 1) / n
    var_v = a * a * var_w + var_vm + 2.0 * a * cov_wv
    df_v = 2.0 * v_hat * v_hat / var_v if var_v > 0 else math.inf
    df_adj = (df_v + 3.0) / (df_v + 1.0) if math.isfinite(df_v) else 1.0

    point = math.sqrt(df_adj * v_hat / w)

    w_df = 2.0 * w * w / var_w if var_w > 0 else 1e12
    q = float(f_dist.ppf(0.975, m - 1, min(w_df, 1e12)))
    upper = math.sqrt(df_adj * (a + q * vm / w))
    return point, max(point, upper)


def rhat_trajectory(chains: Sequence, stride: int,
                    max_prefix: Optional[int] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(prefixes, points, uppers) over prefixes stride, 2*stride, ...

    points/uppers have shape (len(prefixes), d).  Prefixes whose statistic is
    degenerate (zero within-chain variance) carry +inf.
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    lengths = [np.asarray(getattr(c, "samples", c)).shape[0] for c in chains]
    total = min(lengths) if max_prefix is None else min(min(lengths), max_prefix)
    first = getattr(chains[0], "samples", chains[0])
    d = 1 if np.asarray(first).ndim == 1 else np.asarray(first).shape[1]
    prefixes = [p for p in range(stride, total + 1, stride) if p >= 4]
    points = np.full((len(prefixes), d), math.inf)
    uppers = np.full((len(prefixes), d), math.inf)
    for i, p in enumerate(prefixes):
        for j in range(d):
            try:
                points[i, j], uppers[i, j] = gelman_rubin(chains, j, p)
            except ValueError:
                pass  # degenerate prefix stays +inf
    return np.array(prefixes), points, uppers


def iterations_to_threshold(chains: Sequence, threshold: float = 1.01,
                            stride: int = 50) -> float:
    """Smallest evaluated prefix with all-coordinate rhat_upper below threshold.

    Prefixes are multiples of `stride`; returns math.inf when no evaluated
    prefix converges (the not-converged marker).
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    lengths = [np.asarray(getattr(c, "samples", c)).shape[0] for c in chains]
    total = min(lengths)
    first = np.asarray(getattr(chains[0], "samples", chains[0]))
    d = 1 if first.ndim == 1 else first.shape[1]
    for p in range(stride, total + 1, stride):
        if p < 4:
            continue
        ok = True
        for j in range(d):
            try:
                _, upper = gelman_rubin(chains, j, p)
            except ValueError:
                ok = False
                break
            if not upper < threshold:
                ok = False
                break
        if ok:
            return float(p)
    return math.inf


# ---------------------------------------------------------------------------
# effective sample size

def _autocorr_time(x: np.ndarray, tau_cap: Optional[float] = None) -> float:
    """Integrated autocorrelation time 1 + 2 sum rho_t with Geyer truncation.

    Sums paired autocorrelations Gamma_k = rho_{2k} + rho_{2k+1} while they
    stay positive, up to lag N // 2.  With `tau_cap`, returns early (with the
    running lower bound) once the partial sum already exceeds the cap.
    """
    n = x.shape[0]
    xc = x - x.mean()
    gamma0 = float(xc @ xc) / n
    if gamma0 == 0.0:
        raise ValueError("degenerate series: zero variance")
    max_lag = n // 2

    def rho(t: int) -> float:
        return float(xc[: n - t] @ xc[t:]) / n / gamma0

    pair_sum = 0.0
    k = 0
    while 2 * k + 1 <= max_lag:
        gamma = rho(2 * k) + rho(2 * k + 1)
        if gamma <= 0.0:
            break
        pair_sum += gamma
        k += 1
        if tau_cap is not None and 2.0 * pair_sum - 1.0 > tau_cap:
            return 2.0 * pair_sum - 1.0
    return 2.0 * pair_sum - 1.0


def effective_sample_size(trace, coordinate: int = 0) -> float:
    """ESS = N / (1 + 2 sum rho_t), Geyer initial-positive-sequence truncation.

    Accepts a Trace or a plain 1-d/2-d array; the result is clamped to (0, N].
    """
    x = _coordinate_series(trace, coordinate)
    n = x.shape[0]
    if n < 10:
        raise ValueError("need at least 10 samples for an ESS estimate")
    tau = _autocorr_time(x)
    if tau <= 0.0:
        return float(n)
    return float(min(n / tau, n))


def ess_reaches(trace, target: float, coordinate: int = 0) -> bool:
    """Whether the ESS of one coordinate reaches `target`; early-exits the
    lag scan as soon as the running autocorrelation time rules it out."""
    x = _coordinate_series(trace, coordinate)
    n = x.shape[0]
    if n < 10 or n < target:
        return False
    try:
        tau = _autocorr_time(x, tau_cap=n / target)
    except ValueError:
        return False
    if tau <= 0.0:
        return True
    return min(n / tau, n) >= target


def moment_discrepancy(trace, mean: np.ndarray, cov: np.ndarray) -> tuple[float, float]:
    """Max-abs errors of the empirical mean and covariance against references."""
    samples = np.asarray(getattr(trace, "samples", trace), dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    emp_mean = samples.mean(axis=0)
    emp_cov = np.atleast_2d(np.cov(samples.T, ddof=1))
    mean_err = float(np.max(np.abs(emp_mean - mean)))
    cov_err = float(np.max(np.abs(emp_cov - cov)))
    return mean_err, cov_err


# ---------------------------------------------------------------------------
# report container and serialization

@dataclass
class DiagnosticsReport:
    """Per-sampler diagnostics bundle produced by experiment runners."""

    prefixes: np.ndarray
    rhat_point: np.ndarray   # (len(prefixes), d)
    rhat_upper: np.ndarray
    ess: np.ndarray          # (d,), ESS at the configured prefix
    iterations_to_rhat: float
    ess_prefix: int
    extra: dict = field(default_factory=dict)


def rhat_to_csv(report: DiagnosticsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prefix_len", "coord", "rhat_point", "rhat_upper"])
        for i, p in enumerate(report.prefixes):
            for j in range(report.rhat_point.shape[1]):
                writer.writerow([int(p), j + 1,
                                 f"{report.rhat_point[i, j]:.17g}",
                                 f"{report.rhat_upper[i, j]:.17g}"])


def ess_to_csv(report: DiagnosticsReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coord", "ess"])
        for j, val in enumerate(report.ess):
            writer.writerow([j + 1, f"{val:.17g}"])
