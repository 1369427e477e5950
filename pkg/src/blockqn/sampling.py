"""Gradient-and-Hessian sampling and supplemental direction selection."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .ad import ObjectiveProgram, gad
from .linalg import orth

PAD_TOL = 1e-10


@dataclass
class HessianSample:
    """Gradient ``g``, ``h = H(x) g`` and ``Y = H(x) S`` at one point."""

    g: np.ndarray
    h: np.ndarray
    Y: np.ndarray
    S: np.ndarray


@dataclass
class Counters:
    n_ghs: int = 0
    n_gad: int = 0
    n_f: int = 0
    n_accept: int = 0
    n_reject: int = 0


class DirectionStrategy(str, Enum):
    """How the next block of supplemental directions is drawn.

    S1  fresh Gaussian directions
    S2  Gaussian, orthogonalized against the previous block
    S3  previous Hessian sample, orthogonalized against the previous block
    S4-S6  S1-S3 with the last accepted step appended
    """

    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    S4 = "s4"
    S5 = "s5"
    S6 = "s6"

    @property
    def uses_step(self):
        return self in (DirectionStrategy.S4, DirectionStrategy.S5, DirectionStrategy.S6)

    @classmethod
    def parse(cls, text):
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ValueError(f"unknown direction strategy {text!r}") from None


def ghs(prog: ObjectiveProgram, x, S, counters: Optional[Counters] = None) -> HessianSample:
    """Two sequential ``gad`` passes so the gradient is among the sampled directions.

    The first pass takes columns ``1..w`` of ``S``; the second takes the
    remaining ``w-1`` columns followed by the gradient from the first pass.
    """
    S = np.asarray(S, dtype=float)
    m = S.shape[1]
    if m < 1 or m % 2 == 0:
        raise ValueError(f"S must have 2w-1 columns, got {m}")
    w = (m + 1) // 2
    g, Y1 = gad(prog, x, S[:, :w])
    _, Y2 = gad(prog, x, np.column_stack([S[:, w:], g]))
    if counters is not None:
        counters.n_ghs += 1
        counters.n_gad += 2
    return HessianSample(g=g, h=Y2[:, -1].copy(), Y=np.column_stack([Y1, Y2[:, :-1]]), S=S)


def _project_out(B, M):
    if B is None or B.shape[1] == 0:
        return M
    return M - B @ (B.T @ M)


def _reorth(B, M):
    # two passes keep the result orthogonal to B when M is nearly inside span(B)
    return _project_out(B, _project_out(B, M))


def _pad(Q, width, rng, avoid=None):
    """Extend orthonormal ``Q`` with random orthogonal-complement columns.

    New columns are also kept orthogonal to ``avoid`` when the dimension
    leaves room for it.
    """
    n = Q.shape[0]
    cols = [Q[:, j] for j in range(Q.shape[1])]
    if avoid is not None and avoid.shape[1] + width > n:
        avoid = None
    while len(cols) < width:
        v = rng.standard_normal(n)[:, None]
        v = _reorth(avoid, v)
        B = np.column_stack(cols) if cols else None
        v = _reorth(B, v)[:, 0]
        norm = np.linalg.norm(v)
        if norm > PAD_TOL:
            cols.append(v / norm)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def _orth_width(M, width, rng, avoid=None):
    Q = orth(M)
    if Q.shape[1] < width:
        Q = _pad(Q, width, rng, avoid)
    return Q[:, :width]


def next_directions(strategy, rng, n, w, S_prev=None, Y_prev=None, p_prev=None) -> np.ndarray:
    """Pick the next ``n x (2w-1)`` block of orthonormal sample directions.

    Strategies that append the previous step fall back to their plain
    counterpart when no step exists yet; S2 and S3 fall back to S1 without
    a previous block.  Rank loss is repaired by random padding, so the
    result always has full width.
    """
    strategy = DirectionStrategy.parse(strategy.value if isinstance(strategy, DirectionStrategy) else strategy)
    m = 2 * w - 1
    if m > n:
        raise ValueError(f"2w-1 = {m} exceeds the dimension n = {n}")
    have_step = p_prev is not None and np.linalg.norm(p_prev) > 0
    base = {
        DirectionStrategy.S4: DirectionStrategy.S1,
        DirectionStrategy.S5: DirectionStrategy.S2,
        DirectionStrategy.S6: DirectionStrategy.S3,
    }.get(strategy, strategy)
    if base is not DirectionStrategy.S1 and S_prev is None:
        base = DirectionStrategy.S1
    if base is DirectionStrategy.S3 and Y_prev is None:
        raise ValueError("strategies S3/S6 need the previous Hessian sample")
    avoid = S_prev if base is not DirectionStrategy.S1 else None
    if not (strategy.uses_step and have_step):
        return _orth_width(_draw(base, rng, n, m, S_prev, Y_prev), m, rng, avoid)

    inner = _draw(base, rng, n, m - 1, S_prev, Y_prev, truncate=True)
    Q_inner = orth(inner) if inner.shape[1] else np.zeros((n, 0))
    p = np.asarray(p_prev, dtype=float)
    p = p / np.linalg.norm(p)
    return _orth_width(np.column_stack([Q_inner, p]), m, rng)


def _draw(base, rng, n, cols, S_prev, Y_prev, truncate=False):
    if base is DirectionStrategy.S3:
        Y = Y_prev[:, :-1] if truncate else Y_prev
        return _reorth(S_prev, Y)
    M = rng.standard_normal((n, cols))
    if base is DirectionStrategy.S2:
        return _reorth(S_prev, M)
    return M
