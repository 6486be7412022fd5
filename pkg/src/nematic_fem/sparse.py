"""Sparse storage helpers and the Krylov solvers used by the time stepper.

Matrices are ``scipy.sparse.csr_matrix`` instances with sorted column
indices.  The solvers are written out here so that the stopping rule,
constant-mode deflation and failure reporting match what the scheme needs.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """A linear solve did not reach its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def csr(A):
    """Canonical CSR copy: summed duplicates, sorted indices."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


class ScatterPattern:
    """Reusable COO -> CSR map for assembling many matrices on one pattern.

    The sparsity pattern is fixed by ``rows``/``cols``; :meth:`build` sums a
    matching array of values into CSR storage with ``np.bincount``, which is
    much cheaper than rebuilding the structure every time step.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows).ravel()
        cols = np.asarray(cols).ravel()
        key = rows.astype(np.int64) * shape[1] + cols
        uniq, self.position = np.unique(key, return_inverse=True)
        self.shape = shape
        self.indices = (uniq % shape[1]).astype(np.int32)
        urows = uniq // shape[1]
        self.indptr = np.zeros(shape[0] + 1, dtype=np.int32)
        np.add.at(self.indptr, urows + 1, 1)
        self.indptr = np.cumsum(self.indptr).astype(np.int32)
        self.nnz = uniq.size

    def build(self, values):
        data = np.bincount(self.position, weights=np.asarray(values).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


@dataclass
class BlockDiag2x2:
    """One symmetric 2x2 block per triangle, with inverses."""

    blocks: np.ndarray     # (nt, 2, 2)
    inverses: np.ndarray   # (nt, 2, 2)

    @classmethod
    def from_blocks(cls, blocks):
        a, b = blocks[:, 0, 0], blocks[:, 0, 1]
        c, d = blocks[:, 1, 0], blocks[:, 1, 1]
        det = a * d - b * c
        inv = np.empty_like(blocks)
        inv[:, 0, 0] = d / det
        inv[:, 0, 1] = -b / det
        inv[:, 1, 0] = -c / det
        inv[:, 1, 1] = a / det
        return cls(blocks, inv)

    def __len__(self):
        return self.blocks.shape[0]

    def apply(self, w):
        """Block product on a flat vector of length 2*nt."""
        return np.matmul(self.blocks, w.reshape(-1, 2, 1)).ravel()

    def solve(self, w):
        return np.matmul(self.inverses, w.reshape(-1, 2, 1)).ravel()

    def to_sparse(self, inverse=False):
        B = self.inverses if inverse else self.blocks
        return sp.block_diag(list(B), format="csr")


def spmv(A, x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"cannot multiply {A.shape} matrix by vector of shape {x.shape}")
    return A @ x


def _jacobi(A):
    diag = A.diagonal().copy()
    diag[diag == 0.0] = 1.0
    return 1.0 / diag


def cg_solve(A, b, tol=DEFAULT_TOL, max_iter=None, deflate_constants=False, x0=None):
    """Jacobi-preconditioned conjugate gradients for symmetric A.

    With ``deflate_constants`` the iteration runs in the subspace of
    zero-mean vectors, which is where a constant-annihilating operator is
    invertible; ``b`` must then be orthogonal to the constants.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match right-hand side of length {n}")
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise SolverError("non-finite right-hand side")
    if deflate_constants:
        mean_b = b.sum() / np.sqrt(n)
        if abs(mean_b) > 1e-10 * max(bnorm, np.finfo(float).tiny):
            raise ValueError("right-hand side is not orthogonal to constants; deflated system is inconsistent")
        b = b - b.mean()
        bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)

    def project(v):
        return v - v.mean() if deflate_constants else v

    dinv = _jacobi(A)
    x = np.zeros(n) if x0 is None else project(np.array(x0, dtype=float))
    r = project(b - A @ x) if x0 is not None else b.copy()
    z = project(dinv * r)
    p = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > tol * bnorm:
        if it >= max_iter:
            raise SolverError("CG did not converge", rnorm / bnorm, it)
        Ap = A @ p
        if deflate_constants:
            Ap -= Ap.mean()
        pAp = p @ Ap
        if not np.isfinite(pAp) or pAp <= 0.0:
            raise SolverError("CG breakdown: operator not positive definite", rnorm / bnorm, it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        if deflate_constants:
            z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
    if deflate_constants:
        x -= x.mean()
    return x


def bicgstab_solve(A, b, tol=DEFAULT_TOL, max_iter=None, x0=None):
    """Jacobi-preconditioned BiCGStab for general square A."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match right-hand side of length {n}")
    if max_iter is None:
        max_iter = 10 * n
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise SolverError("non-finite right-hand side")
    if bnorm == 0.0:
        return np.zeros(n)
    dinv = _jacobi(A)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > tol * bnorm:
        if it >= max_iter:
            raise SolverError("BiCGStab did not converge", rnorm / bnorm, it)
        rho_new = r_hat @ r
        if rho_new == 0.0 or omega == 0.0 or not np.isfinite(rho_new):
            raise SolverError("BiCGStab breakdown", rnorm / bnorm, it)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        y = dinv * p
        v = A @ y
        rv = r_hat @ v
        if rv == 0.0 or not np.isfinite(rv):
            raise SolverError("BiCGStab breakdown", rnorm / bnorm, it)
        alpha = rho / rv
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * bnorm:
            x += alpha * y
            r = s
            rnorm = np.linalg.norm(r)
            it += 1
            break
        zs = dinv * s
        t = A @ zs
        tt = t @ t
        omega = (t @ s) / tt if tt > 0.0 else 0.0
        x += alpha * y + omega * zs
        r = s - omega * t
        rnorm = np.linalg.norm(r)
        it += 1
    if not np.isfinite(rnorm):
        raise SolverError("BiCGStab produced non-finite residual", rnorm, it)
    return x


def dense_solve(A, b, pivot_tol=1e-13):
    """LU with partial pivoting; raises on (numerically) singular A."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    u = np.abs(np.diag(lu))
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if u.min() <= pivot_tol * scale:
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), b)
