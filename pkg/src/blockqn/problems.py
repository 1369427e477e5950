"""Benchmark objectives with hand-written, scalar-generic gradients."""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import ad
from .ad import ObjectiveProgram


@dataclass(frozen=True)
class RosenbrockSpec:
    n: int = 100
    a: float = 100.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("Rosenbrock needs n >= 2")
        if not self.a > 0:
            raise ValueError("coupling coefficient a must be positive")


@dataclass(frozen=True)
class QuadraticSpec:
    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, rtol=1e-12, atol=0.0):
            raise ValueError("A must be symmetric")
        if np.asarray(self.c).shape != (A.shape[0],):
            raise ValueError("c must have length n")


def rosenbrock(spec: RosenbrockSpec) -> ObjectiveProgram:
    """Generalized Rosenbrock, summed over the n-1 adjacent pairs.

    f(x) = sum_i a (x_{i+1} - x_i^2)^2 + (x_i - 1)^2,  i = 1..n-1
    """
    a = float(spec.a)

    def value(x):
        head, tail = x[:-1], x[1:]
        return (a * (tail - head**2) ** 2 + (head - 1.0) ** 2).sum()

    def gradient(x):
        head, tail = x[:-1], x[1:]
        t = tail - head**2
        # d/dx_i of the i-th term, and of the (i-1)-th term via x_i = x_{(i-1)+1}
        lead = -4.0 * a * head * t + 2.0 * (head - 1.0)
        trail = 2.0 * a * t
        return ad.concatenate([lead, [0.0]]) + ad.concatenate([[0.0], trail])

    return ObjectiveProgram(spec.n, value, gradient, name=f"rosenbrock(n={spec.n},a={a:g})")


def quadratic(spec: QuadraticSpec) -> ObjectiveProgram:
    """f(x) = 0.5 x^T A x + c^T x with gradient A x + c."""
    A = np.asarray(spec.A, dtype=float)
    c = np.asarray(spec.c, dtype=float)

    def value(x):
        return (x * (0.5 * ad.dot(A, x) + c)).sum()

    def gradient(x):
        return ad.dot(A, x) + c

    return ObjectiveProgram(A.shape[0], value, gradient, name=f"quadratic(n={A.shape[0]})")


def random_spd_quadratic(n, lo, hi, rng) -> QuadraticSpec:
    """Random SPD quadratic with eigenvalues spread log-uniformly in [lo, hi]."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.geomspace(lo, hi, n)
    A = (Q * eigs) @ Q.T
    A = 0.5 * (A + A.T)
    return QuadraticSpec(A, rng.standard_normal(n))


def random_start(n, rng) -> np.ndarray:
    """Starting point with components uniform on [-1, 1]."""
    return rng.uniform(-1.0, 1.0, size=n)


class RosenbrockOutcome(str, Enum):
    GlobalMin = "GlobalMin"
    SecondaryMin = "SecondaryMin"
    Other = "Other"


def classify_rosenbrock_result(x, stationary: bool = True) -> RosenbrockOutcome:
    """Label a final Rosenbrock iterate.

    ``stationary`` is the caller's judgement that the gradient is small;
    the secondary minimizer (x_1 near -1, the rest near 1) only counts when
    the run actually stopped there.
    """
    x = np.asarray(x, dtype=float)
    if np.max(np.abs(x - 1.0)) < 0.1:
        return RosenbrockOutcome.GlobalMin
    if stationary and x[0] < -0.5:
        return RosenbrockOutcome.SecondaryMin
    return RosenbrockOutcome.Other
