"""Exception types shared across the package."""

__all__ = [
    "FixedRankError",
    "RankError",
    "TangencyError",
    "GaugeError",
    "SylvesterError",
    "ContractError",
    "SolverFailure",
    "MatrixMarketError",
]


class FixedRankError(Exception):
    """Base class for all errors raised by fixedrank."""


class RankError(FixedRankError, ValueError):
    """A factor matrix is rank deficient or too ill conditioned to use."""


class TangencyError(FixedRankError, ValueError):
    """An ambient matrix is not tangent to the fixed-rank manifold at the point."""


class GaugeError(FixedRankError, ValueError):
    """A gauge transform is invalid (singular, ill conditioned, or not orthogonal)."""


class SylvesterError(FixedRankError, ValueError):
    """A Sylvester system is unsolvable or numerically singular.

    Carries the condition estimate of the vectorized system in ``condition``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ContractError(FixedRankError, ValueError):
    """Inputs violate an interface contract (mismatched base points, missing
    horizontality, bad shapes across objects)."""


class SolverFailure(FixedRankError, RuntimeError):
    """An iterative linear solve did not reach its tolerance.

    Carries the best iterate found (``best``), its relative residual
    (``residual``) and the number of iterations spent (``iterations``).
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class MatrixMarketError(FixedRankError, ValueError):
    """A MatrixMarket file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
