"""Truncated SVD of matrix-free operators by Golub-Kahan-Lanczos bidiagonalization.

The operator is only touched through products with vectors from the left and
from the right. Both Krylov bases are fully reorthogonalized (two classical
Gram-Schmidt passes per step), which keeps the method accurate enough to be
compared against a dense SVD at the 1e-8 level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConvergenceError, DimensionError
from ..sparse import SparseMatrix

__all__ = [
    "LinearOperator",
    "SvdFactors",
    "aslinearoperator",
    "check_linearity",
    "dense_svd",
    "truncated_svd",
]

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free linear map given by its forward and transposed products."""

    n_rows: int
    n_cols: int
    apply: Callable[[np.ndarray], np.ndarray]
    apply_t: Callable[[np.ndarray], np.ndarray]

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def T(self):
        return LinearOperator(self.n_cols, self.n_rows, self.apply_t, self.apply)

    def to_dense(self):
        """Materialize column by column. Test-scale use only."""
        eye = np.eye(self.n_cols)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.n_cols)])


def aslinearoperator(A):
    """Wrap a :class:`SparseMatrix` or dense array as a :class:`LinearOperator`."""
    if isinstance(A, LinearOperator):
        return A
    if isinstance(A, SparseMatrix):
        return LinearOperator(A.n_rows, A.n_cols, A.matvec, A.matvec_t)
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("expected a 2-D array")
    return LinearOperator(A.shape[0], A.shape[1], lambda x: A @ x, lambda y: A.T @ y)


def check_linearity(op, seed=0, trials=3, tol=1e-10):
    """Stochastic check that ``op(a x + b y) == a op(x) + b op(y)`` in both directions.

    Returns the worst relative deviation; raises ``ValueError`` above ``tol``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for fwd, n_in, n_out in ((op.apply, op.n_cols, op.n_rows), (op.apply_t, op.n_rows, op.n_cols)):
        for _ in range(trials):
            x, y = rng.standard_normal(n_in), rng.standard_normal(n_in)
            a, b = rng.standard_normal(2)
            lhs = np.asarray(fwd(a * x + b * y))
            if lhs.shape != (n_out,):
                raise DimensionError(f"operator returned shape {lhs.shape}, expected ({n_out},)")
            rhs = a * np.asarray(fwd(x)) + b * np.asarray(fwd(y))
            scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1.0)
            worst = max(worst, np.linalg.norm(lhs - rhs) / scale)
    if worst > tol:
        raise ValueError(f"operator failed the linearity check (deviation {worst:.2e})")
    return worst


@dataclass(frozen=True)
class SvdFactors:
    """Leading singular triplets ``left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def k(self):
        return self.singular_values.size

    def truncate(self, k):
        return SvdFactors(self.left[:, :k], self.singular_values[:k], self.right[:, :k])


def _fix_signs(left, right):
    # largest-magnitude entry of every left vector made non-negative;
    # argmax picks the lowest index on ties
    if left.size == 0:
        return left, right
    idx = np.argmax(np.abs(left), axis=0)
    flip = np.where(left[idx, np.arange(left.shape[1])] < 0, -1.0, 1.0)
    return left * flip, right * flip


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


def dense_svd(A):
    """Full thin SVD of a dense matrix, with the package sign convention."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError("expected a 2-D array")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    u, v = _fix_signs(u, vt.T)
    u, s, v = (np.ascontiguousarray(a) for a in (u, s, v))
    return SvdFactors(*_freeze(u, s, v))


def _orthogonalize(w, basis, j):
    # two passes of classical Gram-Schmidt against the first j basis columns
    if j == 0:
        return w
    Q = basis[:, :j]
    for _ in range(2):
        w = w - Q @ (Q.T @ w)
    return w


def _random_orthogonal(rng, basis, j, n):
    """Unit vector orthogonal to the first ``j`` basis columns, or None if they span R^n."""
    if j >= n:
        return None
    for _ in range(5):
        w = _orthogonalize(rng.standard_normal(n), basis, j)
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            return w / norm
    return None


def truncated_svd(op, k, max_iter=None, tol=1e-10, seed=0, oversampling=10, check=False):
    """Leading ``k`` singular triplets of a linear operator.

    Parameters
    ----------
    op : LinearOperator, SparseMatrix or ndarray
        The matrix, accessed only through products.
    k : int
        Number of triplets, ``1 <= k <= min(op.shape)``.
    max_iter : int, optional
        Largest Krylov dimension allowed. Defaults to ``min(op.shape)``.
    tol : float
        Convergence threshold: every residual must not exceed ``tol * sigma_1``.
    seed : int
        Seed of the random starting vector.
    oversampling : int
        Residuals are first examined once the Krylov dimension reaches ``k + oversampling``.
    check : bool
        Run :func:`check_linearity` on the operator first.

    Returns
    -------
    SvdFactors

    Raises
    ------
    ConvergenceError
        If the residual test is not met within ``max_iter`` steps.
    """
    op = aslinearoperator(op)
    m, n = op.shape
    dmin = min(m, n)
    if not 1 <= k <= dmin:
        raise ValueError(f"rank k={k} out of range [1, {dmin}]")
    if check:
        check_linearity(op, seed=seed)

    # start on the smaller side so that the long basis can always be extended
    transposed = n > m
    if transposed:
        op = op.T
        m, n = n, m
    max_iter = dmin if max_iter is None else min(int(max_iter), dmin)
    if max_iter < k:
        raise ValueError(f"max_iter={max_iter} is smaller than k={k}")

    rng = np.random.default_rng(seed)
    U = np.zeros((m, max_iter))
    V = np.zeros((n, max_iter + 1))
    alphas = np.zeros(max_iter)
    betas = np.zeros(max_iter)
    anorm = 0.0

    v = rng.standard_normal(n)
    V[:, 0] = v / np.linalg.norm(v)
    first_check = min(k + oversampling, max_iter)
    n_conv = 0
    result = None

    for j in range(max_iter):
        u = np.asarray(op.apply(V[:, j]), dtype=np.float64)
        if j > 0:
            u = u - betas[j - 1] * U[:, j - 1]
        u = _orthogonalize(u, U, j)
        alpha = np.linalg.norm(u)
        anorm = max(anorm, alpha)
        if alpha <= m * _EPS * anorm:
            alpha = 0.0
            u = _random_orthogonal(rng, U, j, m)
            if u is None:  # cannot happen while j < n <= m
                raise ConvergenceError("left Krylov basis exhausted", n_conv)
        else:
            u = u / alpha
        U[:, j] = u
        alphas[j] = alpha

        w = np.asarray(op.apply_t(u), dtype=np.float64) - alpha * V[:, j]
        w = _orthogonalize(w, V, j + 1)
        beta = np.linalg.norm(w)
        anorm = max(anorm, beta)
        if beta <= n * _EPS * anorm:
            beta = 0.0
            w = _random_orthogonal(rng, V, j + 1, n)
            if w is None:
                w = np.zeros(n)
        else:
            w = w / beta
        V[:, j + 1] = w
        betas[j] = beta

        dim = j + 1
        # the small SVD gets costly for deep bases, so look less often there
        stride = 1 + dim // 50
        due = dim >= first_check and (dim - first_check) % stride == 0
        if not (due or dim == max_iter or beta == 0.0):
            continue
        B = np.diag(alphas[:dim]) + np.diag(betas[: dim - 1], 1)
        X, s, Yt = np.linalg.svd(B)
        # A V_j y = sigma U_j x exactly; the transposed residual is beta_j * x[last]
        resid = np.abs(beta * X[-1, :k])
        thresh = tol * max(s[0], np.finfo(float).tiny)
        converged = resid <= thresh
        n_conv = int(np.argmin(converged)) if not converged.all() else k
        if converged.all() or dim == n:
            result = (U[:, :dim] @ X[:, :k], s[:k], V[:, :dim] @ Yt[:k].T)
            break

    if result is None:
        raise ConvergenceError(f"Lanczos did not converge within {max_iter} iterations", n_conv)

    left, sigma, right = result
    if transposed:
        left, right = right, left
    left, right = _fix_signs(left, right)
    left, sigma, right = (np.ascontiguousarray(a) for a in (left, sigma, right))
    return SvdFactors(*_freeze(left, sigma, right))
