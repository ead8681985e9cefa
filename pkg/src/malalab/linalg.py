"""Symmetric positive definite matrix helpers shared by targets and samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-10
EIG_FLOOR = 1e-12


def check_symmetric(mat: np.ndarray, name: str = "matrix", tol: float = SYM_TOL) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    resid = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if resid > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {resid:.3e} > {tol:.1e})")


def spd_eigh(mat: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix; rejects eigenvalues below the floor."""
    check_symmetric(mat, name)
    evals, evecs = np.linalg.eigh(mat)
    if float(evals.min()) < EIG_FLOOR:
        direction = evecs[:, int(np.argmin(evals))]
        raise ValueError(
            f"{name} is not positive definite: smallest eigenvalue "
            f"{evals.min():.3e} < {EIG_FLOOR:.1e} along direction {np.round(direction, 6)}"
        )
    return evals, evecs


def spd_inverse(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric inverse of an SPD matrix via eigendecomposition."""
    evals, evecs = spd_eigh(mat, name)
    inv = (evecs / evals) @ evecs.T
    return (inv + inv.T) / 2.0


def _is_diagonal(mat: np.ndarray) -> bool:
    return bool(np.count_nonzero(mat - np.diag(np.diagonal(mat))) == 0)


@dataclass
class SpdOperator:
    """An SPD matrix with cached square-root / inverse-square-root actions.

    Identity and diagonal matrices get exact elementwise treatment; dense
    matrices go through a symmetric eigendecomposition.  `matrix=None` means
    the identity in dimension `dim`.
    """

    matrix: np.ndarray | None
    dim: int
    _mode: str = field(init=False)
    _diag: np.ndarray | None = field(init=False, default=None)
    _sqrt_diag: np.ndarray | None = field(init=False, default=None)
    _sqrt: np.ndarray | None = field(init=False, default=None)
    _inv_sqrt: np.ndarray | None = field(init=False, default=None)
    log_det: float = field(init=False, default=0.0)
    op_norm: float = field(init=False, default=1.0)

    def __post_init__(self):
        if self.matrix is None:
            self._mode = "identity"
            return
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise ValueError(f"preconditioner shape {mat.shape} does not match dimension {self.dim}")
        check_symmetric(mat, "preconditioner")
        if _is_diagonal(mat):
            d = np.diagonal(mat).copy()
            if float(d.min()) < EIG_FLOOR:
                i = int(np.argmin(d))
                raise ValueError(
                    f"preconditioner is not positive definite: diagonal entry {d[i]:.3e} "
                    f"at index {i} is below {EIG_FLOOR:.1e}"
                )
            self._mode = "diagonal"
            self._diag = d
            self._sqrt_diag = np.sqrt(d)
            self.log_det = float(np.sum(np.log(d)))
            self.op_norm = float(d.max())
            self.matrix = mat
            return
        evals, evecs = spd_eigh(mat, "preconditioner")
        self._mode = "dense"
        self._sqrt = (evecs * np.sqrt(evals)) @ evecs.T
        self._inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
        self.log_det = float(np.sum(np.log(evals)))
        self.op_norm = float(evals.max())
        self.matrix = mat

    @property
    def mode(self) -> str:
        return self._mode

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self._mode == "identity":
            return v
        if self._mode == "diagonal":
            return self._diag * v
        return self.matrix @ v

    def apply_sqrt(self, v: np.ndarray) -> np.ndarray:
        if self._mode == "identity":
            return v
        if self._mode == "diagonal":
            return self._sqrt_diag * v
        return self._sqrt @ v

    def apply_inv_sqrt(self, v: np.ndarray) -> np.ndarray:
        if self._mode == "identity":
            return v
        if self._mode == "diagonal":
            return v / self._sqrt_diag
        return self._inv_sqrt @ v

    def inverse_matrix(self) -> np.ndarray:
        if self._mode == "identity":
            return np.eye(self.dim)
        if self._mode == "diagonal":
            return np.diag(1.0 / self._diag)
        return self._inv_sqrt @ self._inv_sqrt

    def sqrt_matrix(self) -> np.ndarray:
        if self._mode == "identity":
            return np.eye(self.dim)
        if self._mode == "diagonal":
            return np.diag(self._sqrt_diag)
        return self._sqrt.copy()

    def quad_inv(self, v: np.ndarray) -> float:
        """v' P^{-1} v, computed through the inverse square root."""
        w = self.apply_inv_sqrt(v)
        return float(w @ w)


def sqrt_identity_residual(op: SpdOperator) -> float:
    """max |P^{1/2} P^{1/2} - P| over entries; 0 for the identity mode."""
    if op.mode == "identity":
        return 0.0
    s = op.sqrt_matrix()
    return float(np.max(np.abs(s @ s - op.matrix)))
