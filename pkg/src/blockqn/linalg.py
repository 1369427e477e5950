"""Small dense kernels: orthonormal bases, thresholded pseudo-inverse,
symmetric eigendecomposition and a Cholesky factor with a jitter retry.
"""
import numpy as np
from scipy import linalg as sla

from .errors import NotPositiveDefiniteError, NumericalFailure

ORTH_RTOL = 1e-12


def orth(M: np.ndarray, rtol: float = ORTH_RTOL) -> np.ndarray:
    """Orthonormal basis for the numerical column space of ``M``.

    Uses column-pivoted QR; columns whose |R_ii| falls below
    ``rtol * |R_00|`` are dropped. An all-zero (or empty) ``M`` yields an
    ``n x 0`` array.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    n, m = M.shape
    if m == 0 or not np.any(M):
        return np.zeros((n, 0))
    Q, R, _ = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * diag[0]))
    return Q[:, :rank]


def pinv_delta(M: np.ndarray, delta: float) -> np.ndarray:
    """SVD pseudo-inverse treating singular values ``<= delta * s_max`` as zero."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(M.shape[::-1])
    keep = s > delta * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def pinv_rank(M: np.ndarray, delta: float) -> int:
    """Number of singular values ``pinv_delta`` would retain."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > delta * s[0]))


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def sym_eig(A: np.ndarray):
    """Eigenvalues (ascending) and orthonormal eigenvectors of sym(A)."""
    A = symmetrize(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise NumericalFailure("sym_eig: matrix has non-finite entries")
    try:
        return np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"sym_eig did not converge: {exc}") from exc


def spd_factor(C: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``C``; retried once with diagonal jitter."""
    C = symmetrize(np.asarray(C, dtype=float))
    if not np.all(np.isfinite(C)):
        raise NotPositiveDefiniteError("spd_factor: matrix has non-finite entries")
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        pass
    d = C.shape[0]
    jitter = 1e-12 * np.trace(C) / d
    try:
        return np.linalg.cholesky(C + jitter * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (jitter {jitter:.3e} did not help)"
        ) from exc
