"""Batched forward-mode differentiation of gradient programs.

A :class:`DualBatch` carries a value together with ``w`` tangent lanes.
Values may be scalars or arrays; tangents always have one trailing axis of
length ``w``, so each scalar owns a contiguous block of lanes.  Gradient
programs written against the generic helpers in this module (``exp``,
``concatenate``, ``zeros_like`` ...) run unchanged on floats, numpy arrays
and DualBatch inputs.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EvaluationError


class DualBatch:
    """Value plus ``w`` directional derivatives propagated lane by lane."""

    __slots__ = ("value", "tangents")
    # keep numpy from hijacking mixed expressions like ``2.0 * dual``
    __array_ufunc__ = None

    def __init__(self, value, tangents):
        self.value = np.asarray(value, dtype=float)
        self.tangents = np.asarray(tangents, dtype=float)
        if self.tangents.shape[:-1] != self.value.shape:
            raise ValueError(
                f"tangent shape {self.tangents.shape} does not match value "
                f"shape {self.value.shape} plus one lane axis"
            )

    @classmethod
    def constant(cls, value, width):
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros(value.shape + (width,)))

    @property
    def width(self):
        return self.tangents.shape[-1]

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __repr__(self):
        return f"DualBatch(value={self.value!r}, tangents={self.tangents!r})"

    def __getitem__(self, idx):
        return DualBatch(self.value[idx], self.tangents[idx])

    def __setitem__(self, idx, other):
        if isinstance(other, DualBatch):
            self.value[idx] = other.value
            self.tangents[idx] = other.tangents
        else:
            self.value[idx] = other
            self.tangents[idx] = 0.0

    # -- arithmetic ------------------------------------------------------

    def __neg__(self):
        return DualBatch(-self.value, -self.tangents)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, DualBatch):
            return DualBatch(self.value + other.value, self.tangents + other.tangents)
        other = np.asarray(other, dtype=float)
        value = self.value + other
        return DualBatch(value, np.broadcast_to(self.tangents, value.shape + (self.width,)).copy())

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualBatch):
            return DualBatch(self.value - other.value, self.tangents - other.tangents)
        other = np.asarray(other, dtype=float)
        value = self.value - other
        return DualBatch(value, np.broadcast_to(self.tangents, value.shape + (self.width,)).copy())

    def __rsub__(self, other):
        other = np.asarray(other, dtype=float)
        value = other - self.value
        return DualBatch(value, -np.broadcast_to(self.tangents, value.shape + (self.width,)))

    def __mul__(self, other):
        if isinstance(other, DualBatch):
            return DualBatch(
                self.value * other.value,
                self.tangents * other.value[..., None] + self.value[..., None] * other.tangents,
            )
        other = np.asarray(other, dtype=float)
        return DualBatch(self.value * other, self.tangents * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualBatch):
            value = self.value / other.value
            tangents = (self.tangents - value[..., None] * other.tangents) / other.value[..., None]
            return DualBatch(value, tangents)
        other = np.asarray(other, dtype=float)
        return DualBatch(self.value / other, self.tangents / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        value = other / self.value
        return DualBatch(value, -(value / self.value)[..., None] * self.tangents)

    def __pow__(self, power):
        if isinstance(power, DualBatch):
            return exp(power * log(self))
        power = np.asarray(power, dtype=float)
        value = self.value**power
        deriv = power * self.value ** (power - 1)
        return DualBatch(value, deriv[..., None] * self.tangents)

    def __rpow__(self, base):
        base = np.asarray(base, dtype=float)
        value = base**self.value
        return DualBatch(value, (value * np.log(base))[..., None] * self.tangents)

    # comparisons act on the primal value so programs may branch
    def __lt__(self, other):
        return self.value < _primal(other)

    def __le__(self, other):
        return self.value <= _primal(other)

    def __gt__(self, other):
        return self.value > _primal(other)

    def __ge__(self, other):
        return self.value >= _primal(other)

    def __abs__(self):
        return DualBatch(np.abs(self.value), np.sign(self.value)[..., None] * self.tangents)

    def sum(self):
        return DualBatch(self.value.sum(), self.tangents.reshape(-1, self.width).sum(axis=0))


def _primal(x):
    return x.value if isinstance(x, DualBatch) else x


def _unary(x, fn, dfn):
    if isinstance(x, DualBatch):
        return DualBatch(fn(x.value), dfn(x.value)[..., None] * x.tangents)
    return fn(x)


def exp(x):
    if isinstance(x, DualBatch):
        value = np.exp(x.value)
        return DualBatch(value, value[..., None] * x.tangents)
    return np.exp(x)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v)


def sqrt(x):
    if isinstance(x, DualBatch):
        value = np.sqrt(x.value)
        return DualBatch(value, (0.5 / value)[..., None] * x.tangents)
    return np.sqrt(x)


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v))


def tanh(x):
    return _unary(x, np.tanh, lambda v: 1.0 - np.tanh(v) ** 2)


def _width(items):
    for item in items:
        if isinstance(item, DualBatch):
            return item.width
    return None


def concatenate(parts):
    """Concatenate 1-d pieces (arrays, scalars or DualBatch) into one vector."""
    parts = list(parts)
    width = _width(parts)
    if width is None:
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    duals = [p if isinstance(p, DualBatch) else DualBatch.constant(p, width) for p in parts]
    values = [np.atleast_1d(d.value) for d in duals]
    tangents = [d.tangents.reshape(-1, width) for d in duals]
    return DualBatch(np.concatenate(values), np.concatenate(tangents, axis=0))


def stack(items):
    """Stack scalars (floats or 0-d DualBatch) into a vector."""
    items = list(items)
    width = _width(items)
    if width is None:
        return np.array([float(v) for v in items])
    duals = [v if isinstance(v, DualBatch) else DualBatch.constant(v, width) for v in items]
    return DualBatch(
        np.array([d.value for d in duals], dtype=float),
        np.stack([d.tangents for d in duals]),
    )


def zeros_like(x):
    if isinstance(x, DualBatch):
        return DualBatch.constant(np.zeros_like(x.value), x.width)
    return np.zeros_like(np.asarray(x, dtype=float))


def dot(a, b):
    """Matrix-vector product ``a @ b`` where ``a`` is a plain matrix."""
    if isinstance(b, DualBatch):
        a = np.asarray(a, dtype=float)
        return DualBatch(a @ b.value, a @ b.tangents)
    return np.asarray(a, dtype=float) @ np.asarray(b, dtype=float)


def vdot(a, b):
    """Inner product of a plain vector with a plain or dual vector."""
    if isinstance(b, DualBatch):
        a = np.asarray(a, dtype=float)
        return DualBatch(a @ b.value, a @ b.tangents)
    return float(np.asarray(a, dtype=float) @ np.asarray(b, dtype=float))


@dataclass(frozen=True)
class ObjectiveProgram:
    """An objective ``value(x)`` and its gradient program ``gradient(x)``.

    Both callables must accept plain float arrays and DualBatch vectors.
    """

    n: int
    value: Callable
    gradient: Callable
    name: str = "objective"

    def f(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=float)))

    def g(self, x) -> np.ndarray:
        return _as_vector(self.gradient(np.asarray(x, dtype=float)))


def _as_vector(out) -> np.ndarray:
    if isinstance(out, (list, tuple)):
        out = stack(out)
    return np.asarray(out, dtype=float)


def _check_finite(g, Y):
    bad = ~np.isfinite(g)
    if Y is not None:
        bad |= ~np.all(np.isfinite(Y), axis=1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise EvaluationError(f"non-finite gradient component at coordinate {i}", coordinate=i)


def gad(prog: ObjectiveProgram, x, S):
    """Gradient and the Hessian block ``Y = H(x) S`` in one forward pass.

    Lane ``j`` of each input coordinate ``x_i`` is seeded with ``S[i, j]``.
    The primal part of the gradient program's output is the gradient and
    lane ``j`` is column ``j`` of ``Y``.
    """
    x = np.asarray(x, dtype=float)
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != x.shape[0] or S.shape[1] < 1:
        raise ValueError(f"direction block must be n x w with w >= 1, got {S.shape}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("non-finite input point", coordinate=int(np.flatnonzero(~np.isfinite(x))[0]))
    out = prog.gradient(DualBatch(x.copy(), S.copy()))
    if isinstance(out, (list, tuple)):
        out = stack(out)
    if isinstance(out, DualBatch):
        g, Y = out.value.copy(), out.tangents.copy()
    else:
        # gradient does not depend on x
        g = np.asarray(out, dtype=float).copy()
        Y = np.zeros((g.shape[0], S.shape[1]))
    _check_finite(g, Y)
    return g, Y


def finite_difference_jvp(prog: ObjectiveProgram, x, s, step: float) -> np.ndarray:
    """Central-difference estimate of ``H(x) s`` from two gradient calls."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if not np.any(s):
        return np.zeros_like(x)
    gp = prog.g(x + step * s)
    gm = prog.g(x - step * s)
    _check_finite(gp, None)
    _check_finite(gm, None)
    return (gp - gm) / (2.0 * step)
