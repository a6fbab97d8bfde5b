import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridsvd.datasets import toy_interactions
from hybridsvd.errors import DimensionError
from hybridsvd.sparse import SparseMatrix, from_triplets, matvec, matvec_t, scale_columns


def random_sparse(rng, m, n, density=0.1):
    A = rng.standard_normal((m, n)) * (rng.random((m, n)) < density)
    return A, SparseMatrix.from_dense(A)


# -- construction ------------------------------------------------------------

def test_duplicates_are_summed():
    A = from_triplets([(0, 0, 1.0), (0, 0, 1.0)], 1, 1)
    assert A.nnz == 1
    assert A.values.tolist() == [2.0]


def test_empty_triplets_give_zero_matrix():
    A = from_triplets([], 2, 3)
    assert A.shape == (2, 3)
    assert A.nnz == 0
    assert A.row_offsets.tolist() == [0, 0, 0]


def test_toy_interactions_structure():
    R = toy_interactions().matrix
    assert R.shape == (3, 5)
    assert R.nnz == 8
    assert not R.to_dense()[:, 4].any()


def test_out_of_range_triplet_is_named():
    with pytest.raises(IndexError, match=r"\(2, 0, 1.0\)"):
        from_triplets([(0, 0, 1.0), (2, 0, 1.0)], 2, 2)


def test_explicit_zeros_dropped_and_canonical_order():
    A = from_triplets([(1, 2, 3.0), (0, 1, 0.0), (1, 0, 1.0), (1, 0, -1.0)], 2, 3)
    assert A.nnz == 1
    assert A.to_triplets() == [(1, 2, 3.0)]


def test_invariants_checked():
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, [0, 2, 1], [0, 1, 0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        SparseMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])
    with pytest.raises(ValueError):
        SparseMatrix(1, 3, [0, 1], [0], [0.0])


def test_matrices_are_read_only():
    A = SparseMatrix.identity(3)
    with pytest.raises(ValueError):
        A.values[0] = 2.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 6),
                          st.floats(-10, 10, allow_nan=False)), max_size=40))
def test_triplet_round_trip(triplets):
    A = from_triplets(triplets, 6, 7)
    B = from_triplets(A.to_triplets(), 6, 7)
    assert A.to_triplets() == B.to_triplets()
    assert np.array_equal(A.row_offsets, B.row_offsets)


# -- products ----------------------------------------------------------------

def test_identity_matvec():
    x = np.array([1.0, 2.0, 3.0])
    assert matvec(SparseMatrix.identity(3), x).tolist() == [1, 2, 3]
    assert matvec_t(SparseMatrix.identity(3), x).tolist() == [1, 2, 3]


def test_toy_products():
    R = toy_interactions().matrix
    assert matvec(R, np.eye(5)[0]).tolist() == [1, 1, 1]
    assert matvec_t(R, np.ones(3)).tolist() == [3, 1, 1, 3, 0]


def test_zero_and_single_entry_products():
    assert matvec(from_triplets([], 2, 3), np.arange(3.0)).tolist() == [0, 0]
    A = from_triplets([(0, 2, 5.0)], 1, 4)
    assert matvec_t(A, np.array([2.0])).tolist() == [0, 0, 10, 0]


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        matvec(SparseMatrix.identity(3), np.ones(2))
    with pytest.raises(DimensionError):
        matvec_t(from_triplets([], 2, 3), np.ones(3))


@pytest.mark.parametrize("seed", range(10))
def test_products_match_dense(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 201, size=2)
    A, S = random_sparse(rng, m, n, density=rng.uniform(0.01, 0.3))
    x, y = rng.standard_normal(n), rng.standard_normal(m)
    ref, ref_t = A @ x, A.T @ y
    assert np.linalg.norm(S.matvec(x) - ref) <= 1e-13 * max(np.linalg.norm(ref), 1.0)
    assert np.linalg.norm(S.matvec_t(y) - ref_t) <= 1e-13 * max(np.linalg.norm(ref_t), 1.0)
    B = rng.standard_normal((n, 3))
    np.testing.assert_allclose(S.matmat(B), A @ B, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(S.matmat_t(A @ B), A.T @ (A @ B), rtol=1e-12, atol=1e-10)


def test_products_are_deterministic():
    rng = np.random.default_rng(3)
    _, S = random_sparse(rng, 150, 120, 0.2)
    x = rng.standard_normal(150)
    assert S.matvec_t(x).tobytes() == S.matvec_t(x).tobytes()


def test_transpose_and_scipy_round_trip():
    rng = np.random.default_rng(1)
    A, S = random_sparse(rng, 20, 13, 0.3)
    assert np.array_equal(S.T.to_dense(), A.T)
    assert np.array_equal(SparseMatrix.from_scipy(S.to_scipy()).to_dense(), A)


def test_row_and_column_selection():
    rng = np.random.default_rng(2)
    A, S = random_sparse(rng, 10, 8, 0.4)
    assert np.array_equal(S.select_rows([3, 1]).to_dense(), A[[3, 1]])
    assert np.array_equal(S.select_columns([7, 0, 2]).to_dense(), A[:, [7, 0, 2]])


# -- scaling -----------------------------------------------------------------

def test_scale_d1_is_identity():
    rng = np.random.default_rng(0)
    _, S = random_sparse(rng, 30, 20, 0.2)
    out = scale_columns(S, 1.0)
    assert out.values.tobytes() == S.values.tobytes()


def test_scale_column_3_4():
    A = from_triplets([(0, 0, 3.0), (1, 0, 4.0)], 2, 1)
    np.testing.assert_allclose(scale_columns(A, 0.0).to_dense()[:, 0], [0.6, 0.8], rtol=1e-15)


def test_scale_zero_column_stays_zero():
    A = from_triplets([(0, 0, 2.0)], 2, 2)
    out = scale_columns(A, 0.4).to_dense()
    assert np.all(np.isfinite(out))
    assert not out[:, 1].any()


@pytest.mark.parametrize("d", [0.0, 0.5])
@pytest.mark.parametrize("seed", range(5))
def test_scaled_column_norms(d, seed):
    rng = np.random.default_rng(seed)
    A, S = random_sparse(rng, 60, 40, 0.15)
    norms = np.linalg.norm(A, axis=0)
    got = np.linalg.norm(scale_columns(S, d).to_dense(), axis=0)
    nz = norms > 0
    np.testing.assert_allclose(got[nz], norms[nz] ** d, rtol=1e-12)


def test_scale_range_enforced():
    with pytest.raises(ValueError):
        scale_columns(SparseMatrix.identity(2), 1.5)
