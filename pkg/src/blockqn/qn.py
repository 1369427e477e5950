"""Block inverse-Hessian updates that tolerate indefinite curvature.

Both updates enforce the block inverse secant condition ``H' V = U``.
No curvature filtering is done: exact Hessian samples may carry negative
curvature and the trust region is expected to cope with an indefinite H.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SecantAsymmetryError
from .linalg import pinv_delta, pinv_rank, symmetrize

DEFAULT_DELTA = 1e-12
ASYMMETRY_TOL = 1e-6
MIN_CURVATURE = 1e-8


class UpdateKind(str, Enum):
    SR1 = "sr1"
    PSB = "psb"

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ValueError(f"unknown update {text!r}") from None


@dataclass
class UpdateInfo:
    """Rank bookkeeping for one update: how many Gram directions survived."""

    columns: int
    rank: int

    @property
    def thresholded(self):
        return self.rank < self.columns


def _as_block(M):
    M = np.asarray(M, dtype=float)
    return M[:, None] if M.ndim == 1 else M


def check_secant_symmetry(U, V, tol=ASYMMETRY_TOL):
    G = U.T @ V
    scale = np.linalg.norm(G)
    if scale == 0.0:
        return
    asym = np.linalg.norm(G - G.T)
    if asym > tol * scale:
        raise SecantAsymmetryError(
            f"U^T V is not symmetric: relative asymmetry {asym / scale:.2e} > {tol:.0e}"
        )


def sr1_update(H, U, V, delta=DEFAULT_DELTA, full_output=False):
    """Block SR1: ``H + R T R^T`` with ``R = U - H V``, ``T = pinv_delta(R^T V)``."""
    U, V = _as_block(U), _as_block(V)
    check_secant_symmetry(U, V)
    R = U - H @ V
    gram = R.T @ V
    T = pinv_delta(gram, delta)
    H_new = symmetrize(H + R @ T @ R.T)
    if full_output:
        return H_new, UpdateInfo(U.shape[1], pinv_rank(gram, delta))
    return H_new


def psb_update(H, U, V, delta=DEFAULT_DELTA, full_output=False):
    """Block PSB: smallest symmetric Frobenius-norm correction with ``H' V = U``."""
    U, V = _as_block(U), _as_block(V)
    check_secant_symmetry(U, V)
    gram = V.T @ V
    T1 = pinv_delta(gram, delta)
    T2 = V @ T1 @ (U - H @ V).T
    H_new = symmetrize(H + T2 + T2.T - T2 @ V @ T1 @ V.T)
    if full_output:
        return H_new, UpdateInfo(U.shape[1], pinv_rank(gram, delta))
    return H_new


UPDATES = {UpdateKind.SR1: sr1_update, UpdateKind.PSB: psb_update}


def mean_curvature(S, Y) -> float:
    """Mean eigenvalue of sym(S^T Y), kept at least 1e-8 away from zero."""
    S, Y = _as_block(S), _as_block(Y)
    m = S.shape[1]
    alpha = float(np.trace(S.T @ Y)) / m
    if abs(alpha) < MIN_CURVATURE:
        alpha = MIN_CURVATURE if alpha >= 0 else -MIN_CURVATURE
    return alpha
