"""Exception hierarchy shared across the package."""


class HybridSVDError(Exception):
    """Base class for all errors raised by hybridsvd."""


class DimensionError(HybridSVDError, ValueError):
    """Operands do not conform."""


class NotPositiveDefiniteError(HybridSVDError):
    """A non-positive pivot was met during Cholesky factorization.

    Usually means the similarity weight (alpha or beta) is too large for the
    side-similarity matrix to stay positive definite.
    """

    def __init__(self, pivot, value=None, hint=None):
        self.pivot = int(pivot)
        self.value = value
        msg = f"matrix is not positive definite: non-positive pivot at index {self.pivot}"
        if value is not None:
            msg += f" (value {value:.3e})"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)


class PatternMismatchError(HybridSVDError):
    """New matrix has entries outside the analysed sparsity pattern."""


class ConvergenceError(HybridSVDError):
    """Iterative solver stopped before all requested triplets converged."""

    def __init__(self, message, n_converged):
        self.n_converged = int(n_converged)
        super().__init__(f"{message} ({self.n_converged} triplets converged)")


class DataError(HybridSVDError):
    """Malformed or unusable input data."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(HybridSVDError):
    """Invalid run configuration."""
