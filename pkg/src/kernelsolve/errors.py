"""Exception types shared across the library.

The CLI maps these onto its exit-code contract: config problems exit 2,
numerical failures (not-SPD without fallback, singular or ill-conditioned
systems) exit 3.
"""


class KernelSolveError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(KernelSolveError, ValueError):
    """An argument violates a documented precondition."""


class DataFormatError(KernelSolveError):
    """A point/vector file failed to parse; the message carries the offset."""


class NotSPDError(KernelSolveError):
    """Cholesky hit a non-positive pivot; the matrix is not positive definite."""


class SingularMatrixError(KernelSolveError):
    """LU elimination found an exactly zero pivot column."""


class IllConditionedError(KernelSolveError):
    """A reduced system is numerically singular (condition estimate too large)."""

    def __init__(self, node_id: int, cond_estimate: float):
        self.node_id = node_id
        self.cond_estimate = cond_estimate
        super().__init__(
            f"reduced system at node {node_id} is numerically singular "
            f"(1-norm condition estimate {cond_estimate:.3e}); "
            f"increase the regularization or tighten the compression tolerance"
        )


class ConfigError(KernelSolveError):
    """A run configuration violates the config schema."""
