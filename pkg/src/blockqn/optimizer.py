"""Trust-region quasi-Newton minimization driven by exact Hessian samples.

Each accepted step resamples the Hessian along a block of directions plus
the gradient, folds the samples into an inverse-Hessian approximation H
with a block update, and solves the trust-region subproblem restricted to
the span of the sampled curvature.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .ad import ObjectiveProgram
from .errors import EvaluationError, NumericalFailure
from .linalg import orth
from .qn import UPDATES, UpdateKind, mean_curvature
from .sampling import Counters, DirectionStrategy, HessianSample, ghs, next_directions
from .trs import SubproblemModel, assemble, build_basis, trs_small

logger = logging.getLogger(__name__)

SHRINK_BELOW = 0.25
EXPAND_ABOVE = 0.75
SHRINK_FACTOR = 0.25
EXPAND_FACTOR = 2.0
BOUNDARY_RTOL = 1e-8
EXACTNESS_RTOL = 1e-6
COLLAPSE_RADIUS = 1e-14
MAX_CONSECUTIVE_FAILURES = 5


class Status(str, Enum):
    Converged = "Converged"
    MaxIterations = "MaxIterations"
    MaxGhs = "MaxGhs"
    TrustRegionCollapse = "TrustRegionCollapse"
    NumericalFailure = "NumericalFailure"


@dataclass
class OptConfig:
    w: int = 4
    epsilon: float = 1e-5
    delta: float = 1e-12
    delta_max: float = 100.0
    update: UpdateKind = UpdateKind.SR1
    strategy: DirectionStrategy = DirectionStrategy.S4
    pflag: bool = False
    max_iterations: int = 100_000
    max_ghs: int = 100_000
    rng_seed: int = 0

    def __post_init__(self):
        self.update = UpdateKind.parse(self.update.value if isinstance(self.update, Enum) else self.update)
        self.strategy = DirectionStrategy.parse(
            self.strategy.value if isinstance(self.strategy, Enum) else self.strategy
        )
        if self.w < 1:
            raise ValueError("w must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")
        if self.max_iterations < 1 or self.max_ghs < 1:
            raise ValueError("iteration and gHS budgets must be positive")

    def validate_for(self, n):
        if 2 * self.w - 1 > n:
            raise ValueError(f"2w-1 = {2 * self.w - 1} exceeds the dimension n = {n}")


@dataclass
class TraceRecord:
    k: int
    n_ghs: int
    n_f: int
    f: float
    grad_norm: float
    delta: float
    rho: float
    accepted: bool


@dataclass
class OptState:
    k: int
    x: np.ndarray
    f: float
    sample: HessianSample
    H: Optional[np.ndarray]
    Q: Optional[np.ndarray]
    model: Optional[SubproblemModel]
    Delta: float
    rng: np.random.Generator
    p_prev: Optional[np.ndarray] = None
    counters: Counters = field(default_factory=Counters)
    rho: float = math.nan
    accepted: bool = False
    failures: int = 0
    exactness_violations: int = 0
    exactness_skipped: int = 0

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.sample.g))


@dataclass
class RunResult:
    status: Status
    x_final: np.ndarray
    f_final: float
    grad_norm_final: float
    trace: List[TraceRecord]
    counters: Counters
    exactness_violations: int = 0
    exactness_skipped: int = 0
    message: str = ""

    @property
    def n_iterations(self):
        return len(self.trace)


def secant_block(sample: HessianSample):
    """U = [S, g/|g|] and V = [Y, h/|g|] for the block update."""
    gnorm = np.linalg.norm(sample.g)
    U = np.column_stack([sample.S, sample.g / gnorm])
    V = np.column_stack([sample.Y, sample.h / gnorm])
    return U, V


def exactness_residuals(H, sample: HessianSample):
    """Relative residuals of H Y = S (worst column) and H h = g."""
    R = H @ sample.Y - sample.S
    col = np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(sample.S, axis=0), np.finfo(float).tiny)
    gnorm = np.linalg.norm(sample.g)
    rg = np.linalg.norm(H @ sample.h - sample.g) / gnorm if gnorm > 0 else 0.0
    return float(np.max(col, initial=0.0)), float(rg)


def _refresh(H, sample, cfg, state):
    """Block update of H from ``sample`` plus the exactness audit."""
    U, V = secant_block(sample)
    H, info = UPDATES[cfg.update](H, U, V, cfg.delta, full_output=True)
    if info.thresholded:
        state.exactness_skipped += 1
        logger.debug("exactness check skipped: Gram rank %d of %d", info.rank, info.columns)
    else:
        ry, rg = exactness_residuals(H, sample)
        if ry > EXACTNESS_RTOL or rg > EXACTNESS_RTOL:
            state.exactness_violations += 1
            logger.warning("H not exact on sample at k=%d: |HY-S|=%.2e |Hh-g|=%.2e", state.k, ry, rg)
    return H


def initialize(prog: ObjectiveProgram, x0, cfg: OptConfig) -> OptState:
    """Draw S0, sample at x0, seed H from the mean curvature, build the first model."""
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.shape[0]
    cfg.validate_for(n)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    rng = np.random.default_rng(cfg.rng_seed)
    counters = Counters()
    f0 = prog.f(x0)
    counters.n_f += 1
    m = 2 * cfg.w - 1
    S0 = orth(rng.standard_normal((n, m)))
    if S0.shape[1] < m:
        S0 = next_directions(DirectionStrategy.S1, rng, n, cfg.w)
    sample = ghs(prog, x0, S0, counters)
    state = OptState(k=0, x=x0, f=f0, sample=sample, H=None, Q=None, model=None,
                     Delta=cfg.delta_max, rng=rng, counters=counters)
    gnorm = state.grad_norm
    if gnorm == 0.0:
        return state

    alpha = mean_curvature(sample.S, sample.Y)
    state.Delta = min(1.1 * gnorm / (2.0 * abs(alpha)), cfg.delta_max)
    state.H = _refresh(np.eye(n) / alpha, sample, cfg, state)
    state.Q = build_basis(sample.g, sample.h, sample.Y)
    state.model = assemble(state.H, state.Q, sample.g, state.Delta)
    return state


def compute_rho(f_k: float, f_trial: float, predicted_decrease: float) -> float:
    """Actual over predicted decrease; -inf when the model predicts nothing."""
    if not predicted_decrease > 1e-16 * max(1.0, abs(f_k)):
        return -math.inf
    if not math.isfinite(f_trial):
        return -math.inf
    return (f_k - f_trial) / predicted_decrease


def update_radius(Delta: float, rho: float, step_norm: float, cfg: OptConfig) -> float:
    if rho < SHRINK_BELOW:
        return SHRINK_FACTOR * Delta
    if rho > EXPAND_ABOVE and abs(step_norm - Delta) <= BOUNDARY_RTOL * Delta:
        return min(EXPAND_FACTOR * Delta, cfg.delta_max)
    return Delta


def _failed(state: OptState, exc: Exception) -> OptState:
    failures = state.failures + 1
    if failures > MAX_CONSECUTIVE_FAILURES:
        raise NumericalFailure(f"{failures} consecutive subproblem failures; last: {exc}") from exc
    logger.info("subproblem failure %d at k=%d (%s); shrinking radius", failures, state.k, exc)
    counters = dataclasses.replace(state.counters, n_reject=state.counters.n_reject + 1)
    return dataclasses.replace(
        state, k=state.k + 1, Delta=SHRINK_FACTOR * state.Delta, counters=counters,
        rho=-math.inf, accepted=False, failures=failures,
    )


def step(state: OptState, prog: ObjectiveProgram, cfg: OptConfig) -> OptState:
    """One trust-region iteration; returns a new state and leaves ``state`` untouched."""
    try:
        model = state.model
        if model is None:
            model = assemble(state.H, state.Q, state.sample.g, state.Delta)
        model = dataclasses.replace(model, Delta=state.Delta)
        sol = trs_small(model)
    except NumericalFailure as exc:
        return _failed(state, exc)

    p = state.H @ (state.Q @ sol.a)
    x_trial = state.x + p
    counters = dataclasses.replace(state.counters)
    f_trial = prog.f(x_trial)
    counters.n_f += 1
    rho = compute_rho(state.f, f_trial, -sol.model_value)
    Delta = update_radius(state.Delta, rho, float(np.linalg.norm(p)), cfg)

    if not rho > 0:
        counters.n_reject += 1
        return dataclasses.replace(
            state, k=state.k + 1, Delta=Delta, counters=counters, rho=rho, accepted=False,
            failures=0,
        )

    counters.n_accept += 1
    new = dataclasses.replace(
        state, k=state.k + 1, x=x_trial, f=f_trial, Delta=Delta, counters=counters,
        rho=rho, accepted=True, failures=0, p_prev=p,
    )
    n = state.x.shape[0]
    S = next_directions(cfg.strategy, state.rng, n, cfg.w,
                        S_prev=state.sample.S, Y_prev=state.sample.Y, p_prev=p)
    sample = ghs(prog, x_trial, S, counters)
    new.sample = sample
    H = state.H
    if cfg.pflag:
        H = UPDATES[cfg.update](H, p, sample.g - state.sample.g, cfg.delta)
    if np.linalg.norm(sample.g) == 0.0:
        new.H, new.Q, new.model = H, None, None
        return new
    new.H = _refresh(H, sample, cfg, new)
    new.Q = build_basis(sample.g, sample.h, sample.Y)
    try:
        new.model = assemble(new.H, new.Q, sample.g, Delta)
    except NumericalFailure as exc:
        logger.info("model assembly failed after accepted step k=%d: %s", new.k, exc)
        new.model = None
    return new


def _record(state: OptState) -> TraceRecord:
    c = state.counters
    return TraceRecord(state.k, c.n_ghs, c.n_f, float(state.f), state.grad_norm,
                       float(state.Delta), float(state.rho), bool(state.accepted))


def run(prog: ObjectiveProgram, x0, cfg: OptConfig) -> RunResult:
    """Iterate until the gradient norm drops below ``cfg.epsilon`` or a budget runs out."""
    state = initialize(prog, x0, cfg)
    trace = []
    message = ""
    while True:
        if state.grad_norm <= cfg.epsilon:
            status = Status.Converged
            break
        if state.k >= cfg.max_iterations:
            status = Status.MaxIterations
            break
        if state.counters.n_ghs >= cfg.max_ghs:
            status = Status.MaxGhs
            break
        if state.Delta < COLLAPSE_RADIUS:
            status = Status.TrustRegionCollapse
            break
        try:
            state = step(state, prog, cfg)
        except (NumericalFailure, EvaluationError) as exc:
            status = Status.NumericalFailure
            message = str(exc)
            logger.warning("run aborted at k=%d: %s", state.k, exc)
            break
        trace.append(_record(state))
    return RunResult(status, state.x.copy(), float(state.f), state.grad_norm, trace,
                     dataclasses.replace(state.counters), state.exactness_violations,
                     state.exactness_skipped, message)
