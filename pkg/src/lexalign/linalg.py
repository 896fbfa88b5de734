"""Dense matrix kernels: validated matmul, deterministic SVD, column centering.

All public operations compute in 64-bit floats and reject non-finite
input. The SVD wraps LAPACK and then applies a fixed sign convention
(the largest-magnitude entry of each left-singular column is made
positive) so repeated runs on identical input produce identical factors.
"""

from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError


class SvdResult(NamedTuple):
    """Thin SVD factors satisfying ``m == u @ diag(sigma) @ v.T``."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray


def check_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite float64 2-D array or raise a structured error."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got a {arr.ndim}-D array")
    if not np.isfinite(arr).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def check_vector(v, name: str = "vector") -> np.ndarray:
    """Coerce ``v`` to a finite float64 1-D array or raise a structured error."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got a {arr.ndim}-D array")
    if not np.isfinite(arr).all():
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def check_unit_rows(m: np.ndarray, name: str = "matrix", tol: float = 1e-6) -> None:
    """Require every row of ``m`` to have L2 norm 1 within ``tol``."""
    norms = np.linalg.norm(m, axis=1)
    bad = np.where(np.abs(norms - 1.0) > tol)[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"{name} rows must be unit length: row {i} has norm {norms[i]:.6g}"
        )


def unit_rows(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return ``m`` with every row scaled to unit L2 norm.

    Raises NumericalError naming the first offending row if a row has
    zero norm.
    """
    norms = np.linalg.norm(m, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise NumericalError(f"{name} row {int(zero[0])} has zero norm")
    return m / norms[:, None]


def matmul(a, b) -> np.ndarray:
    """Validated matrix product of two dense float64 matrices."""
    a = check_matrix(a, "left operand")
    b = check_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}:"
            f" inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def svd(m) -> SvdResult:
    """Thin SVD with descending singular values and deterministic signs.

    Column signs are fixed after factorization: for each column of u the
    entry of largest magnitude is made non-negative, with the matching
    column of v flipped alongside it, so the product is unchanged.
    """
    m = check_matrix(m, "matrix")
    try:
        u, sigma, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular value decomposition did not converge: {exc}") from exc
    v = vt.T
    cols = np.arange(u.shape[1])
    peak = np.argmax(np.abs(u), axis=0)
    flip = u[peak, cols] < 0.0
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0
    return SvdResult(u, sigma, np.ascontiguousarray(v))


def column_mean_center(m) -> tuple[np.ndarray, np.ndarray]:
    """Subtract each column's mean; returns the centered matrix and the means."""
    m = check_matrix(m, "matrix")
    means = m.mean(axis=0)
    return m - means, means
