"""Fully decoupled projection time stepping for penalized nematic flow.

One step advances (director, intermediate velocity, pressure) through three
linear solves:

1. director: the auxiliary P0 variable is eliminated element by element, and
   the reduced (Schur complement) system for the new director is solved
   with CG; the auxiliary variable is then recovered from its 2x2 blocks;
2. velocity: a linearized convection-diffusion solve with the elastic
   force built from the recovered auxiliary variable;
3. pressure: a stabilized pressure Poisson problem that projects the
   intermediate velocity.

The end-of-step velocity ``u_tilde - k grad p`` is never stored; it only
enters through the load of the next director step and the diagnostics.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly as asm
from .potential import PenaltyParams
from .sparse import SolverError, bicgstab_solve, cg_solve, dense_solve

log = logging.getLogger(__name__)

DENSE_FALLBACK_MAX = 2000


class ConfigurationError(ValueError):
    """Invalid or inadmissible run parameters."""


class InvalidStateError(ValueError):
    """A field violates a precondition of a sub-step."""


class StepError(RuntimeError):
    """A sub-step failed; the state passed in is left untouched."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} step failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.residual = getattr(cause, "residual", float("nan"))


@dataclass
class SimParams:
    nu: float = 1.0
    lam: float = 1.0
    gamma: float = 1.0
    eps: float = 0.05
    k: float = 1e-3
    S: float = 1.0
    T: float = 0.6
    tol: float = 1e-10
    max_iter: Optional[int] = None
    deltas: tuple = (10.0, 6.0, 1.5)
    h4_mode: str = "warn"
    pressure_solver: str = "cg"

    def __post_init__(self):
        for name in ("nu", "lam", "gamma", "eps", "k", "S", "T", "tol"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and np.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be a positive number, got {val!r}")
        if self.k > self.T:
            raise ConfigurationError(f"time step k={self.k} exceeds final time T={self.T}")
        self.deltas = tuple(float(x) for x in self.deltas)
        if len(self.deltas) != 3 or min(self.deltas) <= 0:
            raise ConfigurationError(f"deltas must be three positive numbers, got {self.deltas!r}")
        if self.h4_mode not in ("warn", "fail"):
            raise ConfigurationError(f"h4_mode must be 'warn' or 'fail', got {self.h4_mode!r}")
        if self.pressure_solver not in ("cg", "direct"):
            raise ConfigurationError(f"pressure_solver must be 'cg' or 'direct', got {self.pressure_solver!r}")

    @property
    def penalty(self):
        return PenaltyParams(self.eps)

    @property
    def n_steps(self):
        return int(round(self.T / self.k))


@dataclass
class SimState:
    n: int
    t: float
    d: np.ndarray          # (nv, 2) director
    u_tilde: np.ndarray    # (nv, 2) intermediate velocity, zero on the boundary
    p: np.ndarray          # (nv,) zero-mean pressure
    w: np.ndarray          # (nt, 2) auxiliary variable of the last step
    p_init: Optional[np.ndarray] = field(default=None, repr=False)

    def copy(self):
        return replace(self, d=self.d.copy(), u_tilde=self.u_tilde.copy(), p=self.p.copy(), w=self.w.copy())


@dataclass
class StabilityReport:
    r1: float
    r2: float
    r3: float
    passed: tuple

    @property
    def ok(self):
        return all(self.passed)


def check_h4(mesh_or_h, params):
    """Compare k/(h eps^2), k/(h^1.5 eps) and h/eps with the thresholds."""
    h = float(getattr(mesh_or_h, "h_max", mesh_or_h))
    k, eps = params.k, params.eps
    r = (k / (h * eps ** 2), k / (h ** 1.5 * eps), h / eps)
    passed = tuple(bool(ri <= di) for ri, di in zip(r, params.deltas))
    report = StabilityReport(*r, passed)
    if not report.ok:
        msg = (f"step-size constraints violated: k/(h eps^2)={r[0]:.4g}, "
               f"k/(h^1.5 eps)={r[1]:.4g}, h/eps={r[2]:.4g} vs thresholds {params.deltas}")
        if params.h4_mode == "fail":
            raise ConfigurationError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return report


class StepOperators:
    """Matrices that stay fixed for a given mesh and parameter set."""

    def __init__(self, mesh, params):
        self.mesh = mesh
        self.params = params
        k = params.k
        self.M = asm.assemble_mass_p1(mesh)
        self.L = asm.assemble_stiffness_p1(mesh)
        self.M_dw = asm.assemble_coupling_dw(mesh)
        self.M_wd = self.M_dw.T.tocsr()
        self.local_L = asm.local_stiffness(mesh)
        self.local_M = asm.local_mass(mesh)
        self.J_p = asm.assemble_Jp(mesh, params.S, params.nu)
        self.A_p = (k * self.L + self.J_p).tocsr()
        self.interior = np.flatnonzero(~mesh.boundary_vertex)
        # velocity matrix entries in boundary rows, and the boundary diagonal slots
        pat = asm.vertex_pattern(mesh, 1)
        row_of = np.repeat(np.arange(pat.shape[0]), np.diff(pat.indptr))
        bnd = mesh.boundary_vertex[row_of]
        self._bnd_entries = np.flatnonzero(bnd)
        self._bnd_diag = np.flatnonzero(bnd & (pat.indices == row_of))
        self._vel_static = (self.local_M / k + params.nu * self.local_L)

    def pressure_direct(self, rhs):
        """Zero-mean solve of the pressure system with a cached sparse LU.

        The operator is bordered by the constant vector and a Lagrange
        multiplier, which keeps the solve free of any pinned node.
        """
        if not hasattr(self, "_p_lu"):
            n = self.A_p.shape[0]
            ones = sp.csr_matrix(np.ones((1, n)))
            K = sp.bmat([[self.A_p, ones.T], [ones, None]], format="csc")
            self._p_lu = spla.splu(K)
        x = self._p_lu.solve(np.append(rhs, 0.0))[:-1]
        return x - x.mean()

    def schur_matrix(self, Ew):
        """L_d + (1/k) M_wd Ew^{-1} M_dw assembled on the vector stiffness pattern."""
        mesh = self.mesh
        k = self.params.k
        coef = (mesh.element_area / 3.0) ** 2 / k
        local = self.local_L[:, :, :, None, None] * np.eye(2)[None, None, None]
        local = local + (coef[:, None, None, None, None] * Ew.inverses[:, None, None, :, :])
        return asm.scatter_vector_blocks(mesh, local)

    def velocity_matrix(self, u_adv):
        """Scalar (1/k) M + nu L + C(u_adv) with boundary rows replaced by identity rows."""
        local = self._vel_static + asm.local_convection(self.mesh, u_adv)
        A = asm.scatter_scalar(self.mesh, local)
        A.data[self._bnd_entries] = 0.0
        A.data[self._bnd_diag] = 1.0
        return A


def _operators(mesh, params, ops):
    if ops is not None:
        return ops
    return StepOperators(mesh, params)


def apply_Eu(mesh, d_prev, w):
    """Elastic force (J^T w, phi) tested on P1 vector hats, without forming E_u."""
    J = asm.gradients(d_prev, mesh)
    f = mesh.element_area[:, None] / 3.0 * np.matmul(J.transpose(0, 2, 1), w.reshape(-1, 2, 1))[:, :, 0]
    return asm.scatter_to_vertices(mesh, np.broadcast_to(f[:, None, :], (mesh.n_triangles, 3, 2))).ravel()


def director_step(state, mesh, params, ops=None):
    """Solve the reduced director system and recover the auxiliary variable."""
    ops = _operators(mesh, params, ops)
    k = params.k
    Ew = asm.assemble_Ew(mesh, state.d, params.lam, params.gamma, k)
    F_w = asm.assemble_Fw(mesh, state.d, state.u_tilde, state.p, k)
    F_eps = asm.assemble_Feps(mesh, state.d, params.penalty)
    D_n = state.d.ravel()
    bracket_n = ops.M_dw @ D_n / k - F_w
    rhs = ops.M_wd @ Ew.solve(bracket_n) - F_eps
    A = ops.schur_matrix(Ew)
    try:
        D = cg_solve(A, rhs, tol=params.tol, max_iter=params.max_iter, x0=D_n)
    except SolverError as exc:
        raise StepError("director", exc) from exc
    W = Ew.solve(ops.M_dw @ (D_n - D) / k - F_w)
    return D.reshape(-1, 2), W.reshape(-1, 2)


def velocity_rhs(state, w_next, mesh, params, ops):
    k = params.k
    rhs = (ops.M @ state.u_tilde) / k
    rhs -= asm.assemble_Fu(mesh, state.p).reshape(-1, 2)
    rhs += params.lam * apply_Eu(mesh, state.d, w_next).reshape(-1, 2)
    rhs[mesh.boundary_vertex] = 0.0
    return rhs


def velocity_step(state, w_next, mesh, params, ops=None):
    """Intermediate velocity; both components share one scalar matrix."""
    ops = _operators(mesh, params, ops)
    A = ops.velocity_matrix(state.u_tilde)
    rhs = velocity_rhs(state, w_next, mesh, params, ops)
    out = np.zeros_like(rhs)
    for c in range(2):
        try:
            out[:, c] = bicgstab_solve(A, rhs[:, c], tol=params.tol, max_iter=params.max_iter,
                                       x0=state.u_tilde[:, c])
        except SolverError as exc:
            if A.shape[0] > DENSE_FALLBACK_MAX or not np.all(np.isfinite(rhs)):
                raise StepError("velocity", exc) from exc
            log.debug("BiCGStab failed (%s); using dense fallback", exc)
            try:
                out[:, c] = dense_solve(A.toarray(), rhs[:, c])
            except np.linalg.LinAlgError as exc2:
                raise StepError("velocity", exc2) from exc2
    out[mesh.boundary_vertex] = 0.0
    return out


def pressure_step(u_tilde_next, mesh, params, ops=None, p_guess=None):
    """Solve (k L + J) p = -(div u_tilde, q) in the zero-mean subspace."""
    ops = _operators(mesh, params, ops)
    if np.any(u_tilde_next[mesh.boundary_vertex] != 0.0):
        raise InvalidStateError("intermediate velocity must vanish on the boundary")
    rhs = -asm.assemble_Fp(mesh, u_tilde_next)
    if params.pressure_solver == "direct":
        if abs(rhs.sum()) > 1e-10 * max(np.linalg.norm(rhs) * np.sqrt(rhs.size), np.finfo(float).tiny):
            raise InvalidStateError("pressure right-hand side is not orthogonal to constants")
        if not np.all(np.isfinite(rhs)):
            raise StepError("pressure", SolverError("non-finite right-hand side"))
        return ops.pressure_direct(rhs)
    try:
        return cg_solve(ops.A_p, rhs, tol=params.tol, max_iter=params.max_iter,
                        deflate_constants=True, x0=p_guess)
    except SolverError as exc:
        raise StepError("pressure", exc) from exc
    except ValueError as exc:
        raise InvalidStateError(str(exc)) from exc


def end_of_step_velocity(u_tilde_next, p_next, k, mesh):
    return asm.EOSVelocity(np.asarray(u_tilde_next, float), asm.gradients(p_next, mesh), k)


def gradient_coupling(mesh):
    """B with (B p)_(a,c) = (d_c p, phi_a): pressure gradient tested on vector hats."""
    g = mesh.element_grad                                 # (e, b, c)
    t = mesh.triangles
    nt = len(t)
    rows = np.broadcast_to((2 * t)[:, :, None, None] + np.arange(2)[None, None, None, :], (nt, 3, 3, 2))
    cols = np.broadcast_to(t[:, None, :, None], (nt, 3, 3, 2))
    vals = (mesh.element_area[:, None, None, None] / 3.0) * np.broadcast_to(g[:, None, :, :], (nt, 3, 3, 2))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * mesh.n_vertices, mesh.n_vertices))


def initial_projection(u0_nodal, mesh, params):
    """Stabilized L2 projection of the initial velocity.

    Solves (u, v) + (grad p, v) = (u0, v), (div u, q) + j(p, q) = 0 for
    interior velocity DOFs and a zero-mean pressure.
    """
    nv = mesh.n_vertices
    u0_nodal = np.asarray(u0_nodal, dtype=float).reshape(nv, 2)
    if not np.any(u0_nodal):
        return np.zeros((nv, 2)), np.zeros(nv)
    M2 = asm.assemble_mass_p1(mesh, 2)
    B = gradient_coupling(mesh)
    J = asm.assemble_Jp(mesh, params.S, params.nu)
    idof = (2 * np.flatnonzero(~mesh.boundary_vertex)[:, None] + np.arange(2)).ravel()
    Mi = M2[idof][:, idof]
    Bi = B[idof]
    ones = sp.csr_matrix(np.ones((1, nv)))
    K = sp.bmat([[Mi, Bi, None], [Bi.T, -J, ones.T], [None, ones, None]], format="csc")
    rhs = np.concatenate([(M2 @ u0_nodal.ravel())[idof], np.zeros(nv + 1)])
    sol = spla.spsolve(K, rhs)
    if not np.all(np.isfinite(sol)):
        raise StepError("initialization", SolverError("singular initial projection system"))
    u = np.zeros(2 * nv)
    u[idof] = sol[:idof.size]
    p = sol[idof.size:idof.size + nv]
    return u.reshape(nv, 2), p - p.mean()


def initialize(d0, u0, mesh, params):
    """Initial state: nodal director interpolant and projected velocity.

    ``d0`` and ``u0`` are callables of (x, y) returning 2-vectors (or arrays
    of them).  The projection pressure is kept as ``p_init`` only; the
    stepping pressure starts at zero so that the end-of-step velocity of
    step 0 is exactly the projected initial velocity.
    """
    d = asm.interpolate_nodal(d0, mesh).reshape(mesh.n_vertices, 2)
    u0_nodal = asm.interpolate_nodal(u0, mesh).reshape(mesh.n_vertices, 2)
    u, p0 = initial_projection(u0_nodal, mesh, params)
    return SimState(0, 0.0, d, u, np.zeros(mesh.n_vertices), np.zeros((mesh.n_triangles, 2)), p_init=p0)


def advance(state, mesh, params, ops=None):
    """One full step; returns the new state and its energy record."""
    from .diagnostics import energies

    ops = _operators(mesh, params, ops)
    d_next, w_next = director_step(state, mesh, params, ops)
    u_next = velocity_step(state, w_next, mesh, params, ops)
    p_next = pressure_step(u_next, mesh, params, ops, p_guess=state.p)
    new = SimState(state.n + 1, (state.n + 1) * params.k, d_next, u_next, p_next, w_next, state.p_init)
    return new, energies(new, mesh, params)
