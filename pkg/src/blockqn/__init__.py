"""Trust-region quasi-Newton minimization with batched forward-mode Hessian samples."""
from .ad import DualBatch, ObjectiveProgram, finite_difference_jvp, gad
from .errors import (
    EvaluationError,
    NotPositiveDefiniteError,
    NumericalFailure,
    SecantAsymmetryError,
)
from .optimizer import OptConfig, RunResult, Status, initialize, run, step
from .problems import QuadraticSpec, RosenbrockSpec, quadratic, rosenbrock
from .qn import UpdateKind, mean_curvature, psb_update, sr1_update
from .sampling import DirectionStrategy, HessianSample, ghs, next_directions
from .trs import SubproblemModel, TrsSolution, assemble, build_basis, model_value, trs_small

__version__ = "0.1.0"
