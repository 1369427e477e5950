"""Exception types raised by the optimizer and its kernels."""


class BlockQNError(Exception):
    """Base class for all package errors."""


class EvaluationError(BlockQNError):
    """An objective or gradient evaluation produced a non-finite value."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class NumericalFailure(BlockQNError):
    """A dense kernel failed to converge or received degenerate input."""


class NotPositiveDefiniteError(NumericalFailure):
    """Cholesky factorization failed, or the matrix is too ill-conditioned."""


class SecantAsymmetryError(BlockQNError):
    """U^T V is far from symmetric, so the block secant data is inconsistent."""
