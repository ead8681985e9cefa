"""Target log-densities: losses, priors, Gibbs posteriors and their rescalings.

A target is represented by its potential U with density f(theta) = exp(-U(theta));
U may be +inf outside the support.  Subgradients stand in for gradients so that
non-smooth losses (check loss) fit the same interface.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .linalg import SpdOperator, check_symmetric, spd_eigh, spd_inverse


class Box(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, theta: np.ndarray) -> bool:
        return bool(np.all(theta >= self.lo) and np.all(theta <= self.hi))


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class UniformBoxPrior:
    """Flat prior on a box; log-density 0 inside (unnormalized), -inf outside."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("uniform prior needs lo < hi componentwise")

    @property
    def box(self) -> Box:
        return Box(self.lo, self.hi)

    def log_density(self, theta: np.ndarray) -> float:
        return 0.0 if self.box.contains(theta) else -math.inf

    def grad_log_density(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros_like(theta)


@dataclass(frozen=True)
class GaussianPrior:
    """Gaussian prior N(mean, cov); log-density kept up to a constant."""

    mean: np.ndarray
    cov: np.ndarray
    _precision: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_precision", spd_inverse(cov, "prior covariance"))

    @property
    def box(self) -> Optional[Box]:
        return None

    def log_density(self, theta: np.ndarray) -> float:
        diff = theta - self.mean
        return -0.5 * float(diff @ (self._precision @ diff))

    def grad_log_density(self, theta: np.ndarray) -> np.ndarray:
        return -(self._precision @ (theta - self.mean))


# ---------------------------------------------------------------------------
# losses

@dataclass(frozen=True)
class LossOracle:
    """Per-datum loss value and subgradient, with optional batch fast paths.

    `value(x_row, y, theta)` and `subgrad(x_row, y, theta)` act on a single
    observation.  `batch_value` / `batch_subgrad`, when given, return the sum
    over the whole dataset in one vectorized pass.  `hessian` (per datum) is
    only needed by the inverse-Hessian preconditioner.
    """

    name: str
    value: Callable[[np.ndarray, float, np.ndarray], float]
    subgrad: Callable[[np.ndarray, float, np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray, float, np.ndarray], np.ndarray]] = None
    batch_value: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], float]] = None
    batch_subgrad: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def sum_value(self, covariates, responses, theta) -> float:
        if self.batch_value is not None:
            return self.batch_value(covariates, responses, theta)
        return float(sum(self.value(x, y, theta) for x, y in zip(covariates, responses)))

    def sum_subgrad(self, covariates, responses, theta) -> np.ndarray:
        if self.batch_subgrad is not None:
            return self.batch_subgrad(covariates, responses, theta)
        g = np.zeros_like(theta)
        for x, y in zip(covariates, responses):
            g += self.subgrad(x, y, theta)
        return g


def check_loss(x_row: np.ndarray, y: float, theta: np.ndarray, tau: float) -> float:
    """Quantile check loss (y - x'theta)(tau - 1{y < x'theta})."""
    r = y - float(np.dot(x_row, theta))
    return r * (tau - (1.0 if r < 0.0 else 0.0))


def check_loss_subgrad(x_row: np.ndarray, y: float, theta: np.ndarray, tau: float) -> np.ndarray:
    """Subgradient (1{y < x'theta} - tau) x; the tie y = x'theta takes -tau x."""
    r = y - float(np.dot(x_row, theta))
    ind = 1.0 if r < 0.0 else 0.0
    return (ind - tau) * np.asarray(x_row, dtype=float)


def check_loss_oracle(tau: float) -> LossOracle:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"quantile level tau must be in (0, 1), got {tau}")

    def batch_value(X, Y, theta):
        r = Y - X @ theta
        ind = (r < 0.0).astype(float)
        return float(r @ (tau - ind))

    def batch_subgrad(X, Y, theta):
        r = Y - X @ theta
        ind = (r < 0.0).astype(float)
        return (ind - tau) @ X

    return LossOracle(
        name=f"check(tau={tau:g})",
        value=lambda x, y, th: check_loss(x, y, th, tau),
        subgrad=lambda x, y, th: check_loss_subgrad(x, y, th, tau),
        batch_value=batch_value,
        batch_subgrad=batch_subgrad,
    )


def squared_loss_oracle() -> LossOracle:
    def value(x, y, theta):
        r = y - float(np.dot(x, theta))
        return 0.5 * r * r

    def subgrad(x, y, theta):
        r = y - float(np.dot(x, theta))
        return -r * np.asarray(x, dtype=float)

    def hessian(x, y, theta):
        x = np.asarray(x, dtype=float)
        return np.outer(x, x)

    def batch_value(X, Y, theta):
        r = Y - X @ theta
        return 0.5 * float(r @ r)

    def batch_subgrad(X, Y, theta):
        r = Y - X @ theta
        return -(r @ X)

    return LossOracle(
        name="squared",
        value=value,
        subgrad=subgrad,
        hessian=hessian,
        batch_value=batch_value,
        batch_subgrad=batch_subgrad,
    )


_LOSS_REGISTRY: dict[str, Callable[..., LossOracle]] = {
    "check": check_loss_oracle,
    "squared": squared_loss_oracle,
}


def register_loss(name: str, factory: Callable[..., LossOracle]) -> None:
    """Register a user loss factory; factories take keyword parameters."""
    if name in _LOSS_REGISTRY:
        raise ValueError(f"loss {name!r} is already registered")
    _LOSS_REGISTRY[name] = factory


def get_loss(name: str, **params) -> LossOracle:
    if name not in _LOSS_REGISTRY:
        raise ValueError(f"unknown loss {name!r}; registered: {sorted(_LOSS_REGISTRY)}")
    return _LOSS_REGISTRY[name](**params)


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class Dataset:
    """n observations of (response, covariate row)."""

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        Y = np.asarray(self.responses, dtype=float)
        if X.ndim != 2:
            raise ValueError("covariates must be a 2-d array (n rows, d columns)")
        if Y.shape != (X.shape[0],):
            raise ValueError(f"responses shape {Y.shape} does not match {X.shape[0]} rows")
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "responses", Y)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]


def dataset_to_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{i + 1}" for i in range(data.dim)])
        for y, row in zip(data.responses, data.covariates):
            writer.writerow([f"{y:.17g}"] + [f"{v:.17g}" for v in row])


def dataset_from_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[0] != "y" or header[1:] != [f"x{i + 1}" for i in range(d)]:
            raise ValueError(f"{path}: expected header y,x1,...,xd, got {header}")
        ys, rows = [], []
        for line in reader:
            if not line:
                continue
            if len(line) != d + 1:
                raise ValueError(f"{path}: row of width {len(line)}, expected {d + 1}")
            vals = [float(v) for v in line]
            ys.append(vals[0])
            rows.append(vals[1:])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(ys))


# ---------------------------------------------------------------------------
# targets

@dataclass
class TargetDensity:
    """Potential-form target: density proportional to exp(-potential)."""

    dim: int
    potential: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    support: Optional[Box] = None
    known_moments: Optional[tuple[np.ndarray, np.ndarray]] = None
    value_and_subgrad: Optional[Callable[[np.ndarray], tuple[float, np.ndarray]]] = None
    label: str = ""

    def evaluate(self, theta: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
        """(potential, subgradient) in one pass; subgradient is None at +inf."""
        if self.value_and_subgrad is not None:
            return self.value_and_subgrad(theta)
        u = self.potential(theta)
        if not math.isfinite(u):
            return u, None
        return u, self.subgrad(theta)


def gaussian_target(mean: np.ndarray, precision: np.ndarray) -> TargetDensity:
    """N(mean, precision^{-1}) as a potential; rejects non-SPD precision."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    precision = np.asarray(precision, dtype=float)
    evals, evecs = spd_eigh(precision, "precision matrix")
    cov = (evecs / evals) @ evecs.T
    cov = (cov + cov.T) / 2.0

    def potential(theta):
        diff = theta - mean
        return 0.5 * float(diff @ (precision @ diff))

    def subgrad(theta):
        return precision @ (theta - mean)

    def fused(theta):
        diff = theta - mean
        g = precision @ diff
        return 0.5 * float(diff @ g), g

    return TargetDensity(
        dim=mean.shape[0],
        potential=potential,
        subgrad=subgrad,
        support=None,
        known_moments=(mean.copy(), cov),
        value_and_subgrad=fused,
        label=f"gaussian(d={mean.shape[0]})",
    )


@dataclass(frozen=True)
class GibbsSpec:
    """Gibbs posterior ingredients: data, loss oracle, learning rate, prior."""

    data: Dataset
    loss: LossOracle
    prior: UniformBoxPrior | GaussianPrior
    learning_rate: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate alpha must be positive")
        box = self.prior.box
        if box is not None and box.lo.shape[0] != self.data.dim:
            raise ValueError("prior box dimension does not match covariate dimension")

    def empirical_risk(self, theta: np.ndarray) -> float:
        """R_n(theta) = n^{-1} sum_i loss(X_i, theta)."""
        return self.loss.sum_value(self.data.covariates, self.data.responses, theta) / self.data.n

    def risk_subgrad(self, theta: np.ndarray) -> np.ndarray:
        return self.loss.sum_subgrad(self.data.covariates, self.data.responses, theta) / self.data.n


def gibbs_potential(spec: GibbsSpec) -> TargetDensity:
    """U(theta) = alpha * sum_i loss_i(theta) - log prior(theta), up to a constant."""
    alpha = spec.learning_rate
    X, Y = spec.data.covariates, spec.data.responses
    prior = spec.prior
    box = prior.box
    uniform = isinstance(prior, UniformBoxPrior)

    def potential(theta):
        if box is not None and not box.contains(theta):
            return math.inf
        u = alpha * spec.loss.sum_value(X, Y, theta)
        if not uniform:
            u -= prior.log_density(theta)
        return u

    def subgrad(theta):
        g = alpha * spec.loss.sum_subgrad(X, Y, theta)
        if not uniform:
            g = g - prior.grad_log_density(theta)
        return g

    def fused(theta):
        if box is not None and not box.contains(theta):
            return math.inf, None
        return potential(theta), subgrad(theta)

    return TargetDensity(
        dim=spec.data.dim,
        potential=potential,
        subgrad=subgrad,
        support=box,
        value_and_subgrad=fused,
        label=f"gibbs({spec.loss.name},n={spec.data.n},alpha={alpha:g})",
    )


@dataclass
class RescaledPotential:
    """Local potential V_n(xi) = U(theta_hat + xi/sqrt(n)) - U(theta_hat).

    V_n(0) = 0 by construction; the subgradient is the chain rule image
    (1/sqrt n) of the base subgradient.
    """

    base: TargetDensity
    center: np.ndarray
    n: int
    _sqrt_n: float = field(init=False)
    _u_center: float = field(init=False)

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.n < 1:
            raise ValueError("sample size n must be at least 1")
        self._sqrt_n = math.sqrt(self.n)
        u0 = self.base.potential(self.center)
        if not math.isfinite(u0):
            raise ValueError("center theta_hat lies outside the target support")
        self._u_center = u0

    @property
    def dim(self) -> int:
        return self.base.dim

    def to_theta(self, xi: np.ndarray) -> np.ndarray:
        return self.center + xi / self._sqrt_n

    def value(self, xi: np.ndarray) -> float:
        return self.base.potential(self.to_theta(xi)) - self._u_center

    def subgrad(self, xi: np.ndarray) -> np.ndarray:
        return self.base.subgrad(self.to_theta(xi)) / self._sqrt_n

    def as_target(self) -> TargetDensity:
        def fused(xi):
            u, g = self.base.evaluate(self.to_theta(xi))
            if g is None:
                return u, None
            return u - self._u_center, g / self._sqrt_n

        return TargetDensity(
            dim=self.dim,
            potential=self.value,
            subgrad=self.subgrad,
            support=None,
            value_and_subgrad=fused,
            label=f"rescaled[{self.base.label}]",
        )


def rescaled_potential(spec: GibbsSpec, theta_hat: np.ndarray) -> RescaledPotential:
    return RescaledPotential(base=gibbs_potential(spec), center=theta_hat, n=spec.data.n)


# ---------------------------------------------------------------------------
# quadratic-approximation scan

class ConditionScan(NamedTuple):
    eps: float        # sup |V(xi) - xi'J xi / 2| over the scanned grid
    eps1: float       # sup ||subgrad V(xi) - J xi||
    quadratic_ok: bool  # eps <= 0.04


QUADRATIC_ERROR_THRESHOLD = 0.04


def ellipsoid_grid(precond: Optional[np.ndarray], dim: int, radius: float, grid_step: float) -> np.ndarray:
    """Axis-aligned grid of spacing grid_step inside ||P^{-1/2} xi|| <= radius.

    The origin is always a grid point.  Only dimensions up to 3 are supported;
    the enumeration is exhaustive.
    """
    if dim > 3:
        raise ValueError(f"grid scan supports dimension <= 3, got {dim}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    op = SpdOperator(precond, dim)
    if op.mode == "identity":
        extents = np.full(dim, radius)
    else:
        extents = radius * np.sqrt(np.diagonal(op.matrix))
    axes = []
    for i in range(dim):
        k = int(math.floor(extents[i] / grid_step + 1e-12))
        axes.append(np.arange(-k, k + 1) * grid_step)
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    norms = np.array([math.sqrt(float(w @ w)) for w in (op.apply_inv_sqrt(p) for p in pts)])
    pts = pts[norms <= radius * (1 + 1e-12)]
    if pts.shape[0] == 0:
        raise ValueError("grid contains no points inside the ellipsoid")
    return pts


def condition_a_scan(
    potential,
    J: np.ndarray,
    precond: Optional[np.ndarray],
    radius: float,
    grid_step: float,
) -> ConditionScan:
    """Worst quadratic-approximation errors of a local potential on a grid.

    `potential` is a RescaledPotential or any object with value/subgrad (a
    TargetDensity's potential/subgrad pair also works).  Returns the sup of
    |V - quadratic| and of the gradient mismatch, plus whether the former is
    within the 0.04 budget.
    """
    value = getattr(potential, "value", None) or potential.potential
    subgrad = potential.subgrad
    dim = potential.dim
    J = np.asarray(J, dtype=float)
    check_symmetric(J, "curvature matrix J")
    pts = ellipsoid_grid(precond, dim, radius, grid_step)
    eps = 0.0
    eps1 = 0.0
    for xi in pts:
        quad = 0.5 * float(xi @ (J @ xi))
        eps = max(eps, abs(value(xi) - quad))
        diff = subgrad(xi) - J @ xi
        eps1 = max(eps1, math.sqrt(float(diff @ diff)))
    return ConditionScan(eps, eps1, eps <= QUADRATIC_ERROR_THRESHOLD)
