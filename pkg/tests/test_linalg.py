import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from plss.linalg import (
    DimensionError,
    MatrixMarketError,
    SparseMatrix,
    UnsupportedFormatError,
    Weight,
    as_sparse,
    build_csr,
    column_norms,
    matvec,
    matvec_transpose,
    read_matrix_market,
    read_vector,
    write_matrix_market,
)

HEADER = "%%MatrixMarket matrix coordinate {} {}\n"


def mm(text, field="real", symm="general"):
    return read_matrix_market(io.StringIO(HEADER.format(field, symm) + text))


# -- build_csr -------------------------------------------------------------


def test_build_diagonal():
    A = build_csr([(0, 0, 2.0), (1, 1, 1.0)], 2, 2)
    assert A.nnz == 2
    np.testing.assert_array_equal(A.toarray(), np.diag([2.0, 1.0]))


def test_build_sums_duplicates():
    A = build_csr([(0, 0, 1.0), (0, 0, 1.0)], 1, 1)
    assert A.nnz == 1
    assert A.toarray()[0, 0] == 2.0


def test_build_out_of_range():
    with pytest.raises(IndexError):
        build_csr([(0, 2, 5.0)], 1, 2)
    with pytest.raises(IndexError):
        build_csr([(3, 0, 5.0)], 1, 2)


def test_build_rejects_nonfinite():
    with pytest.raises(ValueError):
        build_csr([(0, 0, np.nan)], 1, 1)
    with pytest.raises(ValueError):
        build_csr([(0, 0, np.inf)], 1, 1)


def test_build_canonical_order_and_empty_rows():
    A = build_csr([(2, 1, 1.0), (0, 2, 3.0), (0, 0, 4.0), (2, 0, -1.0)], 4, 3)
    np.testing.assert_array_equal(A.row_ptr, [0, 2, 2, 4, 4])
    np.testing.assert_array_equal(A.col_idx, [0, 2, 0, 1])
    np.testing.assert_array_equal(A.values, [4.0, 3.0, -1.0, 1.0])
    np.testing.assert_array_equal(A.matvec(np.ones(3)), [7.0, 0.0, 0.0, 0.0])


def test_empty_matrix():
    A = build_csr([], 3, 2)
    assert A.nnz == 0
    np.testing.assert_array_equal(A.matvec(np.ones(2)), np.zeros(3))
    np.testing.assert_array_equal(A.rmatvec(np.ones(3)), np.zeros(2))


def test_immutable():
    A = build_csr([(0, 0, 2.0)], 1, 1)
    with pytest.raises(ValueError):
        A.values[0] = 3.0
    with pytest.raises(AttributeError):
        A.extra = 1


def test_constructor_checks_invariants():
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, [0, 1], [0], [1.0])  # row_ptr too short
    with pytest.raises(ValueError):
        SparseMatrix(1, 3, [0, 2], [2, 1], [1.0, 1.0])  # unsorted row
    with pytest.raises(IndexError):
        SparseMatrix(1, 2, [0, 1], [2], [1.0])


# -- products ---------------------------------------------------------------


def test_matvec_examples():
    D = SparseMatrix.from_dense(np.diag([2.0, 1.0]))
    B = SparseMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matvec(D, [1.0, 1.0]), [2.0, 1.0])
    np.testing.assert_array_equal(matvec(B, [1.0, 1.0]), [3.0, 7.0])
    np.testing.assert_array_equal(matvec(B, np.zeros(2)), np.zeros(2))
    np.testing.assert_array_equal(matvec_transpose(B, [1.0, 1.0]), [4.0, 6.0])
    np.testing.assert_array_equal(matvec_transpose(D, [2.0, 1.0]), [4.0, 1.0])


def test_dimension_mismatch():
    A = SparseMatrix.from_dense(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        A.matvec(np.ones(3))
    with pytest.raises(DimensionError):
        A.rmatvec(np.ones(2))


def test_matmul_operator():
    M = np.arange(6.0).reshape(2, 3)
    A = SparseMatrix.from_dense(M)
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(A @ x, A.matvec(x))
    X = np.eye(3)[:, :2]
    np.testing.assert_allclose(A.matmat(X), M @ X)
    np.testing.assert_allclose(A.rmatmat(np.eye(2)), M.T)


sparse_dense = st.tuples(st.integers(1, 50), st.integers(1, 50), st.integers(0, 2**31 - 1)).map(
    lambda t: _rand_sparse(*t)
)


def _rand_sparse(m, n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.3)
    return M, rng


@settings(max_examples=100, deadline=None)
@given(sparse_dense)
def test_adjoint_identity(case):
    M, rng = case
    A = SparseMatrix.from_dense(M)
    u = rng.standard_normal(A.m)
    v = rng.standard_normal(A.n)
    lhs = u @ A.matvec(v)
    rhs = A.rmatvec(u) @ v
    scale = np.linalg.norm(u) * np.linalg.norm(v) * max(np.linalg.norm(M), 1.0)
    assert abs(lhs - rhs) <= 1e-12 * scale


@settings(max_examples=100, deadline=None)
@given(sparse_dense)
def test_matvec_matches_dense(case):
    M, rng = case
    A = SparseMatrix.from_dense(M)
    x = rng.standard_normal(A.n)
    u = rng.standard_normal(A.m)
    ref = M @ x
    # per-entry bound: each output is a sum of at most n products
    tol = 1e-14 * np.maximum(np.abs(M) @ np.abs(x), 1e-300) * 4
    assert np.all(np.abs(A.matvec(x) - ref) <= tol)
    tolT = 1e-14 * np.maximum(np.abs(M.T) @ np.abs(u), 1e-300) * 4
    assert np.all(np.abs(A.rmatvec(u) - M.T @ u) <= tolT)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=8),
                  elements=st.sampled_from([0.0, 1.0, -2.5, 3.0])))
def test_from_dense_round_trip(M):
    np.testing.assert_array_equal(SparseMatrix.from_dense(M).toarray(), M)


def test_scipy_input():
    sp = pytest.importorskip("scipy.sparse")
    M = np.array([[0.0, 1.0], [2.0, 0.0], [0.0, 3.0]])
    A = as_sparse(sp.coo_matrix(M))
    np.testing.assert_array_equal(A.toarray(), M)


# -- column norms -------------------------------------------------------------


def test_column_norms():
    np.testing.assert_array_equal(column_norms(SparseMatrix.from_dense(np.diag([2.0, 1.0]))), [2.0, 1.0])
    np.testing.assert_array_equal(column_norms(SparseMatrix.from_dense([[3.0], [4.0]])), [5.0])
    A = build_csr([(0, 0, 1.0), (1, 0, 1.0)], 2, 2)
    np.testing.assert_allclose(column_norms(A), [np.sqrt(2.0), 0.0])


def test_row_access():
    M = np.array([[0.0, 2.0, 0.0], [1.0, 0.0, -1.0]])
    A = SparseMatrix.from_dense(M)
    np.testing.assert_array_equal(A.row(1), M[1])
    assert A.row_dot(1, [1.0, 5.0, 2.0]) == -1.0
    np.testing.assert_allclose(A.row_norms(), np.linalg.norm(M, axis=1))


# -- Matrix Market --------------------------------------------------------------


def test_mm_minimal():
    A = mm("2 2 2\n1 1 2.0\n2 2 1.0\n")
    np.testing.assert_array_equal(A.toarray(), np.diag([2.0, 1.0]))


def test_mm_symmetric_expansion():
    A = mm("2 2 2\n1 1 1.0\n2 1 3.0\n", symm="symmetric")
    assert A.nnz == 3
    np.testing.assert_array_equal(A.toarray(), [[1.0, 3.0], [3.0, 0.0]])


def test_mm_comments_integer_and_duplicates():
    A = mm("% a comment\n%\n2 3 3\n1 3 4\n% mid comment\n1 3 1\n2 1 -2\n", field="integer")
    np.testing.assert_array_equal(A.toarray(), [[0.0, 0.0, 5.0], [-2.0, 0.0, 0.0]])
    assert A.values.dtype == np.float64


@pytest.mark.parametrize("field,symm", [("pattern", "general"), ("complex", "general"),
                                        ("real", "skew-symmetric"), ("real", "hermitian")])
def test_mm_unsupported(field, symm):
    with pytest.raises(UnsupportedFormatError):
        mm("1 1 1\n1 1 1\n", field=field, symm=symm)


def test_mm_array_format_rejected():
    with pytest.raises(UnsupportedFormatError):
        read_matrix_market(io.StringIO("%%MatrixMarket matrix array real general\n2 1\n1\n2\n"))


@pytest.mark.parametrize("body", [
    "2 2 1\n3 1 1.0\n",      # row out of bounds
    "2 2 1\n1 0 1.0\n",      # zero-based coordinate
    "2 2 2\n1 1 1.0\n",      # too few entries
    "2 2 1\n1 1 1.0\n2 2 1.0\n",  # too many entries
    "2 2 1\n1 1 abc\n",
    "2 2\n",
    "",
])
def test_mm_parse_errors(body):
    with pytest.raises(MatrixMarketError):
        mm(body)


def test_mm_bad_banner():
    with pytest.raises(MatrixMarketError):
        read_matrix_market(io.StringIO("not a banner\n1 1 1\n1 1 1\n"))


def test_mm_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    M = rng.standard_normal((7, 5)) * (rng.random((7, 5)) < 0.4)
    A = SparseMatrix.from_dense(M)
    path = tmp_path / "a.mtx"
    write_matrix_market(A, path, comment="round trip")
    B = read_matrix_market(path)
    x = rng.standard_normal(5)
    np.testing.assert_array_equal(B.matvec(x), A.matvec(x))
    C = build_csr(zip(*B.triplets()), B.m, B.n)
    np.testing.assert_array_equal(C.matvec(x), A.matvec(x))


def test_read_vector_formats():
    v = read_vector(io.StringIO("%%MatrixMarket matrix array real general\n% c\n3 1\n1\n2.5\n-3\n"))
    np.testing.assert_array_equal(v, [1.0, 2.5, -3.0])
    np.testing.assert_array_equal(read_vector(io.StringIO("# plain\n1 2\n3\n")), [1.0, 2.0, 3.0])
    with pytest.raises(MatrixMarketError):
        read_vector(io.StringIO("%%MatrixMarket matrix array real general\n3 1\n1\n2\n"))


# -- Weight -------------------------------------------------------------------


def test_weight_identity_and_diagonal():
    v = np.array([2.0, 3.0])
    I = Weight()
    assert I.is_identity
    np.testing.assert_array_equal(I.apply(v), v)
    W = Weight("diagonal", np.array([0.5, 2.0]))
    np.testing.assert_array_equal(W.apply(v), [1.0, 6.0])
    np.testing.assert_array_equal(W.apply_inverse(v), [4.0, 1.5])
    assert W.inner_inverse(v, v) == 4.0 * 2.0 + 1.5 * 3.0
    np.testing.assert_allclose(W.sqrt() ** 2, W.diag)


@pytest.mark.parametrize("diag", [[1.0, 0.0], [1.0, -1.0], [np.inf, 1.0]])
def test_weight_rejects_nonpositive(diag):
    with pytest.raises(ValueError):
        Weight("diagonal", np.array(diag))


def test_weight_mode_consistency():
    with pytest.raises(ValueError):
        Weight("diagonal")
    with pytest.raises(ValueError):
        Weight("identity", np.ones(2))
