"""Numerical engines: Lanczos truncated SVD, dense SVD oracle, sparse Cholesky."""

from .cholesky import (
    CholeskyFactor,
    SymbolicCholesky,
    analysis_counts,
    analyze,
    check_symmetric,
    cholesky,
    factorize,
    minimum_degree_ordering,
    mul_lower,
    refactorize,
    reset_counters,
    solve_lower,
)
from .svd import (
    LinearOperator,
    SvdFactors,
    aslinearoperator,
    check_linearity,
    dense_svd,
    truncated_svd,
)

__all__ = [
    "CholeskyFactor",
    "LinearOperator",
    "SvdFactors",
    "SymbolicCholesky",
    "analysis_counts",
    "analyze",
    "aslinearoperator",
    "check_linearity",
    "check_symmetric",
    "cholesky",
    "dense_svd",
    "factorize",
    "minimum_degree_ordering",
    "mul_lower",
    "refactorize",
    "reset_counters",
    "solve_lower",
    "truncated_svd",
]
