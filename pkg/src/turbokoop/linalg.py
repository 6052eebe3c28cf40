"""Dense least-squares machinery.

Matrices are plain ``float64`` numpy arrays.  Everything here is a pure
function; nothing mutates its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError


def as_matrix(m, name="matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array, or raise."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise InvalidInputError(f"{name} has a non-finite entry at {tuple(bad)}")
    return a


def default_rank_tolerance(singular_values, shape) -> float:
    if len(singular_values) == 0:
        return 0.0
    return max(shape) * np.finfo(np.float64).eps * float(singular_values[0])


def _svd(a):
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier
        import scipy.linalg

        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def _inverted_spectrum(s, shape, rank_tolerance, ridge):
    if rank_tolerance < 0 or ridge < 0:
        raise InvalidInputError("rank_tolerance and ridge must be >= 0")
    tol = rank_tolerance if rank_tolerance > 0 else default_rank_tolerance(s, shape)
    keep = s > tol
    inv = np.zeros_like(s)
    if ridge > 0:
        inv[keep] = s[keep] / (s[keep] ** 2 + ridge)
    else:
        inv[keep] = 1.0 / s[keep]
    return inv, int(np.count_nonzero(keep))


def pseudoinverse(m, rank_tolerance: float = 0.0, ridge: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse via the singular value decomposition.

    Parameters
    ----------
    m : array_like, shape (r, c)
    rank_tolerance : float
        Singular values at or below this are treated as zero.  ``0`` selects
        ``max(r, c) * eps * sigma_max``.
    ridge : float
        Tikhonov parameter; when positive each retained ``1/s`` becomes
        ``s / (s**2 + ridge)``.

    Returns
    -------
    ndarray, shape (c, r)
    """
    a = as_matrix(m)
    if a.size == 0:
        raise ShapeError("pseudoinverse needs at least one row and one column")
    u, s, vt = _svd(a)
    inv, _ = _inverted_spectrum(s, a.shape, rank_tolerance, ridge)
    return (vt.T * inv) @ u.T


@dataclass(frozen=True)
class LeastSquaresSolution:
    coefficients: np.ndarray
    residual_norm: float
    effective_rank: int
    n_lift: int

    @property
    def A(self) -> np.ndarray:
        return self.coefficients[:, : self.n_lift]

    @property
    def B(self) -> np.ndarray:
        return self.coefficients[:, self.n_lift :]


def solve_stacked_regression(
    y_lift, x_lift, u, rank_tolerance: float = 0.0, ridge: float = 0.0
) -> LeastSquaresSolution:
    """Solve ``min ||Y_lift - A X_lift - B U||_F`` for ``[A, B]``.

    The answer is ``Y_lift @ pinv([X_lift; U])``, the minimum-norm solution
    when the stacked regressor is rank deficient.
    """
    y = as_matrix(y_lift, "y_lift")
    x = as_matrix(x_lift, "x_lift")
    uu = as_matrix(u, "u")
    n_cols = y.shape[1]
    if x.shape[1] != n_cols or uu.shape[1] != n_cols:
        raise ShapeError(
            f"column counts differ: y_lift {y.shape}, x_lift {x.shape}, u {uu.shape}"
        )
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"x_lift has {x.shape[0]} rows but y_lift has {y.shape[0]}")

    z = np.vstack([x, uu])
    if z.size == 0 or n_cols == 0:
        raise ShapeError("regression needs at least one sample and one regressor")
    uz, s, vt = _svd(z)
    inv, rank = _inverted_spectrum(s, z.shape, rank_tolerance, ridge)
    coef = ((y @ vt.T) * inv) @ uz.T
    resid = y - coef @ z
    return LeastSquaresSolution(
        coefficients=coef,
        residual_norm=float(np.linalg.norm(resid)),
        effective_rank=rank,
        n_lift=x.shape[0],
    )
