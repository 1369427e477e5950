"""Ellipsoidal trust-region subproblem in a low-dimensional subspace.

The subspace model is

    min_a  0.5 a^T P a + b^T a   subject to  a^T C a <= Delta^2

with ``P = Q^T H Q``, ``b = Q^T H g`` and ``C = (H Q)^T (H Q)``, so that the
full step ``p = H Q a`` satisfies ``||p|| <= Delta``.  ``trs_small`` returns a
global minimizer: after the change of variables ``y = L^T a`` (``C = L L^T``)
the constraint becomes a ball and the problem is solved in the eigenbasis
of ``L^-1 P L^-T`` by a safeguarded Newton iteration on the secular equation,
with an explicit hard-case branch.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefiniteError, NumericalFailure
from .linalg import orth, spd_factor, sym_eig, symmetrize

logger = logging.getLogger(__name__)

MAX_COND = 1e14
SECULAR_RTOL = 1e-12
MAX_SECULAR_ITER = 200
# an eigencomponent of the gradient below this fraction of its norm counts as zero
HARD_CASE_RTOL = 1e-12


@dataclass
class SubproblemModel:
    P: np.ndarray
    b: np.ndarray
    C: np.ndarray
    Delta: float


@dataclass
class TrsSolution:
    a: np.ndarray
    mu: float
    model_value: float
    on_boundary: bool
    hard_case: bool = False
    iterations: int = 0


def build_basis(g, h, Y) -> np.ndarray:
    """Orthonormal basis of ``[h/|g|, g/|g|, Y]``; rank loss shrinks the width."""
    gnorm = np.linalg.norm(g)
    if not gnorm > 0:
        raise ValueError("build_basis needs a nonzero gradient")
    Y = np.asarray(Y, dtype=float).reshape(len(g), -1)
    return orth(np.column_stack([h / gnorm, g / gnorm, Y]))


def assemble(H, Q, g, Delta) -> SubproblemModel:
    """Project the inverse-Hessian model onto span(Q).

    Raises NotPositiveDefiniteError when ``C`` cannot be factored, i.e. H is
    (numerically) singular on span(Q).
    """
    if not Delta > 0:
        raise ValueError("Delta must be positive")
    HQ = H @ Q
    P = symmetrize(Q.T @ HQ)
    b = Q.T @ (H @ g)
    C = symmetrize(HQ.T @ HQ)
    spd_factor(C)
    return SubproblemModel(P, b, C, float(Delta))


def model_value(model: SubproblemModel, a) -> float:
    a = np.asarray(a, dtype=float)
    return float(0.5 * a @ model.P @ a + model.b @ a)


def _positive_eigvec(v):
    nz = np.flatnonzero(np.abs(v) > 1e-14 * np.max(np.abs(v)))
    return -v if v[nz[0]] < 0 else v


def _solve_ball(lam, V, c, Delta):
    """Global minimizer of 0.5 y^T diag(lam) y + c^T y over ||y|| <= Delta.

    ``lam`` ascending, ``c`` already expressed in the eigenbasis ``V``.
    Returns (z, mu, hard, iterations) with z in eigen-coordinates.
    """
    d = len(lam)
    lam_min = lam[0]
    scale = max(np.max(np.abs(lam)), np.finfo(float).tiny)
    cnorm = np.linalg.norm(c)

    if lam_min > 0:
        z0 = -c / lam
        if np.linalg.norm(z0) <= Delta:
            return z0, 0.0, False, 0

    if cnorm == 0.0:
        z = np.zeros(d)
        if lam_min >= 0:
            return z, 0.0, False, 0
        z[0] = Delta
        return z, -lam_min, True, 0

    lo = max(0.0, -lam_min)
    cluster = lam - lam_min <= 1e-12 * scale
    c_min = np.linalg.norm(c[cluster])
    if lam_min <= 0 and c_min <= HARD_CASE_RTOL * cnorm:
        rest = ~cluster
        z = np.zeros(d)
        z[rest] = -c[rest] / (lam[rest] + lo)
        znorm = np.linalg.norm(z)
        if znorm < Delta:
            tau = np.sqrt(Delta**2 - znorm**2)
            z[np.flatnonzero(cluster)[0]] = tau
            return z, lo, True, 0
        # boundary reachable on the regular branch; drop the negligible components
        c = c.copy()
        c[cluster] = 0.0
        cnorm = np.linalg.norm(c)

    # ||z(mu)|| is decreasing on (lo, inf); hi is a point where ||z(hi)|| <= Delta
    hi = lo + cnorm / Delta
    mu = hi
    for it in range(1, MAX_SECULAR_ITER + 1):
        shifted = lam + mu
        z = -c / shifted
        znorm = np.linalg.norm(z)
        if abs(znorm - Delta) <= SECULAR_RTOL * Delta:
            return z, mu, False, it
        if znorm > Delta:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 4 * np.finfo(float).eps * max(hi, scale):
            return z * (Delta / znorm) if znorm > Delta else z, mu, False, it
        # Newton on phi(mu) = 1/||z|| - 1/Delta, which is nearly linear in mu
        dz = np.sum(c**2 / shifted**3)
        phi = 1.0 / znorm - 1.0 / Delta
        dphi = dz / znorm**3
        step = phi / dphi if dphi > 0 else np.inf
        candidate = mu - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * mu
        mu = candidate
    raise NumericalFailure(
        f"secular equation did not converge in {MAX_SECULAR_ITER} iterations "
        f"(mu={mu:.6e}, bracket=[{lo:.6e}, {hi:.6e}], lam_min={lam_min:.6e})"
    )


def trs_small(model: SubproblemModel) -> TrsSolution:
    """Global minimizer of the ellipsoidal subspace model."""
    P, b, C, Delta = model.P, model.b, model.C, model.Delta
    L = spd_factor(C)
    cond = np.linalg.cond(C)
    if not cond <= MAX_COND:
        raise NotPositiveDefiniteError(f"constraint matrix too ill-conditioned (cond={cond:.2e})")
    Linv_P = solve_triangular(L, P, lower=True)
    A = symmetrize(solve_triangular(L, Linv_P.T, lower=True))
    bt = solve_triangular(L, b, lower=True)
    lam, V = sym_eig(A)
    if V.shape[1]:
        V = V.copy()
        V[:, 0] = _positive_eigvec(V[:, 0])
    c = V.T @ bt
    z, mu, hard, iters = _solve_ball(lam, V, c, Delta)
    y = V @ z
    a = solve_triangular(L.T, y, lower=False)
    # keep the step inside the ellipsoid despite rounding in the back-substitution
    ca = float(a @ C @ a)
    if ca > Delta**2 * (1 + 1e-10):
        a = a * (Delta / np.sqrt(ca))
    on_boundary = mu > 0 or hard
    return TrsSolution(a, float(mu), model_value(model, a), bool(on_boundary), hard, iters)
