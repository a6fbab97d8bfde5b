"""Compressed-row sparse matrices and the few kernels the package needs.

Only one storage format is supported. Transposed products are computed by
scattering into the output instead of materializing the transpose, so both
product directions cost a single pass over the stored entries.

Dense blocks are plain 2-D ``numpy`` arrays of ``float64``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = [
    "SparseMatrix",
    "from_triplets",
    "matvec",
    "matvec_t",
    "scale_columns",
]


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class SparseMatrix:
    """Immutable matrix in compressed-row layout.

    Parameters
    ----------
    n_rows, n_cols : int
        Matrix shape.
    row_offsets : array_like of int, length ``n_rows + 1``
        Start of each row inside ``col_indices`` / ``values``.
    col_indices : array_like of int
        Column of every stored entry; strictly increasing within a row.
    values : array_like of float
        Stored entries; none of them may be zero.

    Use :func:`from_triplets` to build a matrix from unordered entries.
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_rows")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = _frozen(row_offsets, np.int64)
        self.col_indices = _frozen(col_indices, np.int64)
        self.values = _frozen(values, np.float64)
        self._rows = None
        if check:
            self._validate()

    def _validate(self):
        offs, cols = self.row_offsets, self.col_indices
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if offs.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offs[0] != 0 or offs[-1] != cols.size or cols.size != self.values.size:
            raise ValueError("row_offsets inconsistent with the number of stored entries")
        if np.any(np.diff(offs) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if cols.size:
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
            step = np.diff(cols)
            # a non-increasing step is only allowed where a new row starts
            row_start = np.zeros(cols.size, dtype=bool)
            row_start[offs[:-1][offs[:-1] < cols.size]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zeros must not be stored")

    # -- basic properties -------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.size)

    @property
    def row_indices(self):
        """Row index of every stored entry (expanded ``row_offsets``)."""
        if self._rows is None:
            rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_offsets))
            rows.setflags(write=False)
            self._rows = rows
        return self._rows

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    # -- conversions ------------------------------------------------------

    @classmethod
    def from_dense(cls, array):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise DimensionError("expected a 2-D array")
        rows, cols = np.nonzero(array)
        offsets = np.zeros(array.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=array.shape[0]), out=offsets[1:])
        return cls(array.shape[0], array.shape[1], offsets, cols, array[rows, cols], check=False)

    @classmethod
    def identity(cls, n, scale=1.0):
        if scale == 0.0:
            return cls(n, n, np.zeros(n + 1), [], [], check=False)
        return cls(n, n, np.arange(n + 1), np.arange(n), np.full(n, float(scale)), check=False)

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_indices, self.col_indices] = self.values
        return out

    def to_triplets(self):
        return list(zip(self.row_indices.tolist(), self.col_indices.tolist(), self.values.tolist()))

    def to_scipy(self):
        import scipy.sparse as sps

        return sps.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    @classmethod
    def from_scipy(cls, mat):
        mat = mat.tocsr(copy=True)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr, mat.indices, mat.data)

    def transpose(self):
        """Return the transpose, again in compressed-row layout."""
        order = np.lexsort((self.row_indices, self.col_indices))
        offsets = np.zeros(self.n_cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.col_indices, minlength=self.n_cols), out=offsets[1:])
        return SparseMatrix(
            self.n_cols, self.n_rows, offsets,
            self.row_indices[order], self.values[order], check=False,
        )

    @property
    def T(self):
        return self.transpose()

    # -- access -----------------------------------------------------------

    def row(self, i):
        """Row ``i`` as a dense vector."""
        out = np.zeros(self.n_cols)
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        out[self.col_indices[lo:hi]] = self.values[lo:hi]
        return out

    def row_entries(self, i):
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def diagonal(self):
        out = np.zeros(min(self.shape))
        mask = self.row_indices == self.col_indices
        out[self.row_indices[mask]] = self.values[mask]
        return out

    def column_norms(self):
        return np.sqrt(np.bincount(self.col_indices, weights=self.values ** 2, minlength=self.n_cols))

    def select_rows(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return from_triplets_arrays(
            *_subset(self, rows, axis=0), n_rows=rows.size, n_cols=self.n_cols
        )

    def select_columns(self, cols):
        cols = np.asarray(cols, dtype=np.int64)
        return from_triplets_arrays(
            *_subset(self, cols, axis=1), n_rows=self.n_rows, n_cols=cols.size
        )

    # -- products ---------------------------------------------------------

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise DimensionError(f"matvec expects a vector of length {self.n_cols}, got shape {x.shape}")
        return np.bincount(self.row_indices, weights=self.values * x[self.col_indices],
                           minlength=self.n_rows)

    def matvec_t(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_rows,):
            raise DimensionError(f"matvec_t expects a vector of length {self.n_rows}, got shape {x.shape}")
        return np.bincount(self.col_indices, weights=self.values * x[self.row_indices],
                           minlength=self.n_cols)

    def matmat(self, B):
        """Dense product ``A @ B`` for a 2-D block ``B``."""
        B = np.asarray(B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != self.n_cols:
            raise DimensionError(f"matmat expects {self.n_cols} rows, got shape {B.shape}")
        out = np.zeros((self.n_rows, B.shape[1]))
        np.add.at(out, self.row_indices, self.values[:, None] * B[self.col_indices])
        return out

    def matmat_t(self, B):
        """Dense product ``A.T @ B`` for a 2-D block ``B``."""
        B = np.asarray(B, dtype=np.float64)
        if B.ndim != 2 or B.shape[0] != self.n_rows:
            raise DimensionError(f"matmat_t expects {self.n_rows} rows, got shape {B.shape}")
        out = np.zeros((self.n_cols, B.shape[1]))
        np.add.at(out, self.col_indices, self.values[:, None] * B[self.row_indices])
        return out

    def __matmul__(self, other):
        other = np.asarray(other)
        return self.matvec(other) if other.ndim == 1 else self.matmat(other)

    def scale_columns(self, d):
        return scale_columns(self, d)


def _subset(A, keep, axis):
    idx = A.row_indices if axis == 0 else A.col_indices
    pos = np.full(A.shape[axis], -1, dtype=np.int64)
    pos[keep] = np.arange(keep.size)
    mask = pos[idx] >= 0
    rows, cols = A.row_indices[mask], A.col_indices[mask]
    if axis == 0:
        rows = pos[rows]
    else:
        cols = pos[cols]
    return rows, cols, A.values[mask]


def from_triplets_arrays(rows, cols, vals, n_rows, n_cols):
    """Vectorized core of :func:`from_triplets`; indices must already be valid."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if rows.size:
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        new = np.ones(rows.size, dtype=bool)
        new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(new)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
    return SparseMatrix(n_rows, n_cols, offsets, cols, vals, check=False)


def from_triplets(triplets, n_rows, n_cols):
    """Build a matrix from ``(row, col, value)`` triplets.

    Duplicate positions are summed and entries that end up exactly zero are
    dropped.

    Raises
    ------
    IndexError
        If a triplet addresses a position outside ``n_rows x n_cols``.
    """
    triplets = list(triplets)
    for t in triplets:
        r, c = t[0], t[1]
        if not (0 <= r < n_rows and 0 <= c < n_cols):
            raise IndexError(f"triplet {tuple(t)!r} out of range for shape ({n_rows}, {n_cols})")
    if not triplets:
        return from_triplets_arrays([], [], [], n_rows, n_cols)
    rows, cols, vals = zip(*triplets)
    return from_triplets_arrays(rows, cols, vals, n_rows, n_cols)


def matvec(A, x):
    """Exact sparse product ``A @ x``."""
    return A.matvec(x)


def matvec_t(A, x):
    """Exact sparse product ``A.T @ x`` without forming the transpose."""
    return A.matvec_t(x)


def scale_columns(A, d):
    """Scale columns of ``A`` by their Euclidean norm raised to ``d - 1``.

    With ``d = 1`` the matrix is returned unchanged. Columns with zero norm
    keep a multiplier of one.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"scaling exponent must lie in [0, 1], got {d}")
    if d == 1.0:
        return A
    norms = A.column_norms()
    mult = np.ones_like(norms)
    nz = norms > 0
    mult[nz] = norms[nz] ** (d - 1.0)
    return SparseMatrix(A.n_rows, A.n_cols, A.row_offsets, A.col_indices,
                        A.values * mult[A.col_indices], check=False)
