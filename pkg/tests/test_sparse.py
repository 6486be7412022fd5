import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from nematic_fem.sparse import (BlockDiag2x2, ScatterPattern, SolverError, bicgstab_solve, cg_solve,
                                csr, dense_solve, spmv)


def laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def neumann_laplacian_1d(n):
    A = laplacian_1d(n).tolil()
    A[0, 0] = A[-1, -1] = 1.0
    return A.tocsr()


def test_scatter_pattern_sums_duplicates():
    rows = np.array([0, 0, 1, 0])
    cols = np.array([0, 1, 1, 0])
    pat = ScatterPattern(rows, cols, (2, 2))
    A = pat.build(np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.array_equal(A.toarray(), [[5.0, 2.0], [0.0, 3.0]])
    assert pat.nnz == 3


def test_csr_canonical():
    A = csr(sp.coo_matrix(([1.0, 2.0], ([0, 0], [1, 1])), shape=(2, 2)))
    assert A.nnz == 1 and A[0, 1] == 3.0


def test_spmv_dimension_check():
    with pytest.raises(ValueError):
        spmv(sp.eye(3, format="csr"), np.ones(4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_block_diag_inverse(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(5, 2, 2))
    blocks = a @ a.transpose(0, 2, 1) + np.eye(2)
    B = BlockDiag2x2.from_blocks(blocks)
    x = rng.normal(size=10)
    assert np.allclose(B.solve(B.apply(x)), x, rtol=1e-10, atol=1e-12)
    assert np.allclose((B.to_sparse() @ B.to_sparse(inverse=True)).toarray(), np.eye(10), atol=1e-12)


def test_cg_matches_dense():
    rng = np.random.default_rng(0)
    A = laplacian_1d(40) + sp.eye(40) * 0.1
    b = rng.normal(size=40)
    x = cg_solve(A, b, tol=1e-12)
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-9, atol=1e-11)


def test_cg_zero_rhs():
    assert np.array_equal(cg_solve(laplacian_1d(5), np.zeros(5)), np.zeros(5))


def test_cg_deflated_singular():
    rng = np.random.default_rng(1)
    A = neumann_laplacian_1d(30)
    b = rng.normal(size=30)
    b -= b.mean()
    x = cg_solve(A, b, tol=1e-12, deflate_constants=True)
    assert abs(x.mean()) < 1e-14
    assert np.linalg.norm(A @ x - b) < 1e-9 * np.linalg.norm(b)


def test_cg_deflated_inconsistent():
    with pytest.raises(ValueError):
        cg_solve(neumann_laplacian_1d(10), np.ones(10), deflate_constants=True)


def test_cg_indefinite_breakdown():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolverError):
        cg_solve(A, np.array([1.0, -1.0]))


def test_cg_iteration_cap():
    A = laplacian_1d(200)
    with pytest.raises(SolverError) as info:
        cg_solve(A, np.ones(200), tol=1e-14, max_iter=3)
    assert info.value.iterations == 3


def test_cg_nonfinite_rhs():
    with pytest.raises(SolverError):
        cg_solve(laplacian_1d(4), np.array([1.0, np.nan, 0.0, 0.0]))


def test_bicgstab_nonsymmetric():
    rng = np.random.default_rng(2)
    n = 50
    A = laplacian_1d(n) + sp.diags([0.3 * np.ones(n - 1)], [1]) + sp.eye(n)
    b = rng.normal(size=n)
    x = bicgstab_solve(A.tocsr(), b, tol=1e-12)
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-9, atol=1e-11)


def test_bicgstab_nonfinite():
    with pytest.raises(SolverError):
        bicgstab_solve(sp.eye(3, format="csr"), np.array([np.inf, 0, 0]))


def test_dense_solve_and_singular():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert np.allclose(dense_solve(A, [1.0, 2.0]), np.linalg.solve(A, [1.0, 2.0]))
    with pytest.raises(np.linalg.LinAlgError):
        dense_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), [1.0, 2.0])
