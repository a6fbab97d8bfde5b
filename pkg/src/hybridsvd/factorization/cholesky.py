"""Sparse Cholesky factorization with a reusable symbolic phase.

A factorization is split into

* symbolic analysis: fill-reducing ordering, elimination tree and the
  nonzero pattern of the factor. Depends only on the sparsity pattern.
* numeric factorization: left-looking column Cholesky that fills the
  precomputed pattern.

Matrices ``(1 - a) I + a Z`` share one pattern for every ``a`` in ``(0, 1)``,
so a single analysis serves a whole sweep over ``a`` (see :func:`refactorize`).

The stored factor satisfies ``P S P^T = L L^T`` where ``(P x)[i] = x[perm[i]]``.
:func:`mul_lower` and :func:`solve_lower` work with the generalized factor
``G = P^T L`` (so that ``S = G G^T``) and never expose permuted coordinates.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NotPositiveDefiniteError, PatternMismatchError
from ..sparse import SparseMatrix

__all__ = [
    "CholeskyFactor",
    "SymbolicCholesky",
    "analyze",
    "analysis_counts",
    "cholesky",
    "factorize",
    "minimum_degree_ordering",
    "mul_lower",
    "refactorize",
    "reset_counters",
    "solve_lower",
]

_EPS = np.finfo(np.float64).eps
_counters = Counter()


def analysis_counts():
    """Number of symbolic analyses and numeric factorizations run so far."""
    return {"symbolic": _counters["symbolic"], "numeric": _counters["numeric"]}


def reset_counters():
    _counters.clear()


def _pattern_keys(S):
    return S.row_indices * S.n_cols + S.col_indices


def check_symmetric(S, tol=1e-12):
    """Largest ``|S - S^T|`` entry; raises ``ValueError`` above ``tol``."""
    if S.n_rows != S.n_cols:
        raise DimensionError(f"matrix must be square, got shape {S.shape}")
    Ss = S.to_scipy()
    diff = abs(Ss - Ss.T)
    worst = float(diff.max()) if diff.nnz else 0.0
    if worst > tol:
        raise ValueError(f"matrix is not symmetric (max |S - S^T| = {worst:.3e})")
    return worst


def _symmetrized(S):
    St = S.transpose()
    keys = np.concatenate([_pattern_keys(S), _pattern_keys(St)])
    vals = np.concatenate([S.values, St.values]) * 0.5
    from ..sparse import from_triplets_arrays

    return from_triplets_arrays(keys // S.n_cols, keys % S.n_cols, vals, S.n_rows, S.n_cols)


def minimum_degree_ordering(S):
    """Greedy minimum-degree elimination order of the graph of ``S``.

    Eliminating a vertex joins its neighbours into a clique. Ties go to the
    lowest vertex index so the order is deterministic.
    """
    n = S.n_rows
    adj = [set() for _ in range(n)]
    for i, j in zip(S.row_indices.tolist(), S.col_indices.tolist()):
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    heap = [(len(adj[v]), v) for v in range(n)]
    heapq.heapify(heap)
    done = np.zeros(n, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au.update(nbrs)
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
        adj[v] = set()
    return np.asarray(order, dtype=np.int64)


@dataclass(frozen=True)
class SymbolicCholesky:
    """Pattern-only part of a factorization, reusable across numeric values."""

    n: int
    perm: np.ndarray
    inv_perm: np.ndarray
    pattern: np.ndarray          # sorted linear keys of the analysed matrix
    parent: np.ndarray           # elimination tree of the permuted matrix
    col_offsets: np.ndarray      # CSC pattern of L, diagonal first in each column
    row_indices: np.ndarray
    row_updates: tuple = field(repr=False)  # per row j: (cols k < j, positions of L[j, k])

    @property
    def nnz(self):
        return int(self.row_indices.size)


def analyze(S, ordering="mindegree"):
    """Symbolic analysis of the pattern of ``S`` (values are ignored).

    Parameters
    ----------
    S : SparseMatrix
        Square matrix with a symmetric pattern. The diagonal is always
        treated as structurally nonzero.
    ordering : {"mindegree", "natural"}
        Fill-reducing ordering to use.
    """
    if S.n_rows != S.n_cols:
        raise DimensionError(f"matrix must be square, got shape {S.shape}")
    n = S.n_rows
    if ordering == "mindegree":
        perm = minimum_degree_ordering(S)
    elif ordering == "natural":
        perm = np.arange(n, dtype=np.int64)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)

    # strictly upper part of the permuted matrix, column by column
    ci, cj = inv[S.row_indices], inv[S.col_indices]
    up = ci < cj
    upper_cols = [[] for _ in range(n)]
    for i, j in zip(ci[up].tolist(), cj[up].tolist()):
        upper_cols[j].append(i)

    # elimination tree (Liu, with path compression)
    parent = [-1] * n
    ancestor = [-1] * n
    for j in range(n):
        for i in upper_cols[j]:
            while i != -1 and i < j:
                nxt = ancestor[i]
                ancestor[i] = j
                if nxt == -1:
                    parent[i] = j
                i = nxt

    # row patterns of L by walking the elimination tree from every entry
    columns = [[] for _ in range(n)]   # off-diagonal rows of each column of L
    row_cols = [None] * n
    row_local = [None] * n
    mark = [-1] * n
    for i in range(n):
        mark[i] = i
        ks, local = [], []
        for k in upper_cols[i]:
            while mark[k] != i:
                mark[k] = i
                ks.append(k)
                local.append(len(columns[k]))
                columns[k].append(i)
                k = parent[k]
        row_cols[i] = ks
        row_local[i] = local

    counts = np.fromiter((len(c) + 1 for c in columns), dtype=np.int64, count=n)
    col_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=col_offsets[1:])
    row_indices = np.empty(col_offsets[-1], dtype=np.int64)
    for j in range(n):
        lo = col_offsets[j]
        row_indices[lo] = j
        row_indices[lo + 1: col_offsets[j + 1]] = columns[j]
    updates = []
    for i in range(n):
        ks = np.asarray(row_cols[i], dtype=np.int64)
        # +1 skips the diagonal stored first in every column
        pos = col_offsets[ks] + 1 + np.asarray(row_local[i], dtype=np.int64)
        updates.append((ks, pos))

    keys = np.union1d(_pattern_keys(S), np.arange(n, dtype=np.int64) * (n + 1))
    _counters["symbolic"] += 1
    arrays = [perm, inv, keys, np.asarray(parent, dtype=np.int64), col_offsets, row_indices]
    for a in arrays:
        a.setflags(write=False)
    return SymbolicCholesky(n, *arrays, tuple(updates))


@dataclass(frozen=True)
class CholeskyFactor:
    """Sparse lower-triangular factor ``L`` with ``P S P^T = L L^T``.

    ``lower`` is stored in compressed-row layout; the column-oriented copy
    used by the triangular kernels is kept alongside.
    """

    lower: SparseMatrix
    permutation: np.ndarray
    symbolic: SymbolicCholesky
    col_values: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.symbolic.n

    @property
    def nnz(self):
        return self.lower.nnz

    def diagonal(self):
        return self.col_values[self.symbolic.col_offsets[:-1]]


def _numeric(sym, S, hint=None):
    n = sym.n
    inv = sym.inv_perm
    ci, cj = inv[S.row_indices], inv[S.col_indices]
    low = ci >= cj
    ci, cj, cv = ci[low], cj[low], S.values[low]
    order = np.argsort(cj, kind="stable")
    ci, cv = ci[order], cv[order]
    bounds = np.searchsorted(cj[order], np.arange(n + 1))

    Lp, Li = sym.col_offsets, sym.row_indices
    Lx = np.zeros(Li.size)
    work = np.zeros(n)
    for j in range(n):
        lo, hi = bounds[j], bounds[j + 1]
        work[ci[lo:hi]] = cv[lo:hi]
        diag_in = abs(work[j])
        ks, positions = sym.row_updates[j]
        for k, pos in zip(ks.tolist(), positions.tolist()):
            end = Lp[k + 1]
            work[Li[pos:end]] -= Lx[pos] * Lx[pos:end]
        d = work[j]
        if not d > n * _EPS * diag_in:
            raise NotPositiveDefiniteError(sym.perm[j], value=float(d), hint=hint)
        lj = np.sqrt(d)
        a, b = Lp[j], Lp[j + 1]
        Lx[a] = lj
        rows = Li[a + 1:b]
        Lx[a + 1:b] = work[rows] / lj
        work[Li[a:b]] = 0.0
    _counters["numeric"] += 1

    # CSR copy of L for the public ``lower`` field
    col_of = np.repeat(np.arange(n, dtype=np.int64), np.diff(Lp))
    order = np.lexsort((col_of, Li))
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(Li, minlength=n), out=row_offsets[1:])
    lower = SparseMatrix(n, n, row_offsets, col_of[order], Lx[order], check=False)
    Lx.setflags(write=False)
    return CholeskyFactor(lower, sym.perm, sym, Lx)


def factorize(symbolic, S, check=True, symmetrize=False, hint=None):
    """Numeric factorization of ``S`` on a precomputed symbolic structure."""
    if isinstance(symbolic, CholeskyFactor):
        symbolic = symbolic.symbolic
    if S.shape != (symbolic.n, symbolic.n):
        raise DimensionError(f"matrix shape {S.shape} does not match analysed size {symbolic.n}")
    if symmetrize:
        S = _symmetrized(S)
    elif check:
        check_symmetric(S)
    keys = _pattern_keys(S)
    pos = np.searchsorted(symbolic.pattern, keys)
    pos = np.minimum(pos, symbolic.pattern.size - 1)
    if keys.size and np.any(symbolic.pattern[pos] != keys):
        raise PatternMismatchError("matrix has entries outside the analysed sparsity pattern")
    return _numeric(symbolic, S, hint=hint)


def cholesky(S, ordering="mindegree", check=True, symmetrize=False, hint=None):
    """Sparse Cholesky factorization of a symmetric positive definite matrix.

    Parameters
    ----------
    S : SparseMatrix
        Symmetric positive definite matrix.
    ordering : {"mindegree", "natural"}
        Fill-reducing ordering.
    check : bool
        Verify ``max |S - S^T| <= 1e-12`` before factorizing.
    symmetrize : bool
        Replace ``S`` by ``(S + S^T) / 2`` instead of checking.
    hint : str, optional
        Appended to the message of a :class:`NotPositiveDefiniteError`.

    Raises
    ------
    NotPositiveDefiniteError
        On a non-positive pivot; ``pivot`` holds the original row index.
    """
    if symmetrize:
        S = _symmetrized(S)
        check = False
    elif check:
        check_symmetric(S)
    return factorize(analyze(S, ordering=ordering), S, check=False, hint=hint)


def refactorize(symbolic, S_new, check=True, hint=None):
    """Numeric refactorization reusing an existing symbolic analysis.

    ``symbolic`` may be a :class:`CholeskyFactor` or :class:`SymbolicCholesky`.
    The pattern of ``S_new`` must be contained in the analysed pattern.
    """
    return factorize(symbolic, S_new, check=check, hint=hint)


def _as_block(B, n):
    B = np.asarray(B, dtype=np.float64)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"expected {n} rows, got shape {B.shape}")
    return B, vector


def mul_lower(factor, B, transpose=False):
    """Product with the generalized factor: ``G @ B`` or ``G.T @ B`` where ``G = P^T L``."""
    n = factor.n
    B, vector = _as_block(B, n)
    perm = factor.permutation
    if transpose:
        out = factor.lower.matmat_t(B[perm])
    else:
        out = np.empty_like(B)
        out[perm] = factor.lower.matmat(B)
    return out[:, 0] if vector else out


def solve_lower(factor, B, transpose=False):
    """Solve ``G X = B`` (or ``G^T X = B``) with ``G = P^T L`` by substitution."""
    n = factor.n
    B, vector = _as_block(B, n)
    perm = factor.permutation
    Lp, Li = factor.symbolic.col_offsets, factor.symbolic.row_indices
    Lx = factor.col_values
    if not transpose:
        X = B[perm].copy()
        for j in range(n):
            a, b = Lp[j], Lp[j + 1]
            X[j] /= Lx[a]
            if b > a + 1:
                X[Li[a + 1:b]] -= np.outer(Lx[a + 1:b], X[j])
    else:
        Y = B.copy()
        for j in range(n - 1, -1, -1):
            a, b = Lp[j], Lp[j + 1]
            if b > a + 1:
                Y[j] -= Lx[a + 1:b] @ Y[Li[a + 1:b]]
            Y[j] /= Lx[a]
        X = np.empty_like(Y)
        X[perm] = Y
    return X[:, 0] if vector else X
