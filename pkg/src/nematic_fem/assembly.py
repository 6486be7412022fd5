"""Finite-element operators for the P1 / P0 discretization.

Field layouts (plain numpy arrays):

* P1 scalar field: ``(nv,)`` nodal values.
* P1 vector field: ``(nv, 2)``; as a coefficient vector it is flattened
  node-major, i.e. ``[x0, y0, x1, y1, ...]``.
* P0 vector field: ``(nt, 2)``, flattened the same way per triangle.

Matrices are indexed ``[test, trial]``.  Vector-valued P1 operators are the
Kronecker product of the scalar operator with the 2x2 identity.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import composite_quadrature, quadrature
from .potential import f_tilde
from .sparse import BlockDiag2x2, ScatterPattern

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def _cache(mesh):
    cache = mesh.__dict__.setdefault("_assembly_cache", {})
    return cache


def vertex_pattern(mesh, components=1):
    """Scatter pattern of all (vertex, vertex) pairs sharing a triangle.

    For ``components=2`` every pair gets a full 2x2 block.
    """
    key = ("vertex", components)
    cache = _cache(mesh)
    if key not in cache:
        t = mesh.triangles
        n = mesh.n_vertices
        if components == 1:
            rows = np.broadcast_to(t[:, :, None], (len(t), 3, 3))
            cols = np.broadcast_to(t[:, None, :], (len(t), 3, 3))
        else:
            c = np.arange(2)
            rows = np.broadcast_to((2 * t)[:, :, None, None, None] + c[None, None, None, :, None],
                                   (len(t), 3, 3, 2, 2))
            cols = np.broadcast_to((2 * t)[:, None, :, None, None] + c[None, None, None, None, :],
                                   (len(t), 3, 3, 2, 2))
        cache[key] = ScatterPattern(rows, cols, (components * n, components * n))
    return cache[key]


def scatter_scalar(mesh, local):
    """Sum per-element 3x3 blocks ``local[e, test, trial]`` into a CSR matrix."""
    return vertex_pattern(mesh, 1).build(local)


def scatter_vector_blocks(mesh, local):
    """Sum per-element blocks ``local[e, a, b, c, c']`` (vertex a/b, component c/c')."""
    return vertex_pattern(mesh, 2).build(local)


def _kron2(mesh, local):
    blocks = local[:, :, :, None, None] * np.eye(2)[None, None, None]
    return scatter_vector_blocks(mesh, blocks)


def local_mass(mesh):
    return mesh.element_area[:, None, None] * _LOCAL_MASS[None]


def local_stiffness(mesh):
    G = mesh.element_grad
    return mesh.element_area[:, None, None] * np.einsum("eai,ebi->eab", G, G)


def assemble_mass_p1(mesh, components=1):
    local = local_mass(mesh)
    return scatter_scalar(mesh, local) if components == 1 else _kron2(mesh, local)


def assemble_stiffness_p1(mesh, components=1):
    local = local_stiffness(mesh)
    return scatter_scalar(mesh, local) if components == 1 else _kron2(mesh, local)


def local_convection(mesh, u_adv):
    """Scalar local blocks of c(u_adv, trial, test), exact via the 3-midpoint rule."""
    rule = quadrature(2)
    lam = rule.points                                  # (q, 3)
    U = u_adv[mesh.triangles]                          # (e, 3, 2)
    G = mesh.element_grad                              # (e, 3, 2)
    uq = np.matmul(lam, U)                             # velocity at quadrature points
    div = (U * G).sum(axis=(1, 2))
    adv = np.matmul(uq, G.transpose(0, 2, 1))          # [e, q, a] = u(x_q) . grad(phi_a)
    wlam = lam.T * rule.weights                        # [b, q]
    term1 = np.matmul(wlam, adv)                       # [e, test b, trial a]
    term2 = 0.5 * div[:, None, None] * (wlam @ lam)[None]
    return mesh.element_area[:, None, None] * (term1 + term2)


def assemble_convection(mesh, u_adv, components=2):
    """Skew-symmetrized convection matrix for advecting P1 field ``u_adv``."""
    local = local_convection(mesh, np.asarray(u_adv, dtype=float).reshape(-1, 2))
    return scatter_scalar(mesh, local) if components == 1 else _kron2(mesh, local)


def assemble_coupling_dw(mesh):
    """P1-vector / P0-vector pairing, shape ``(2 nt, 2 nv)``.

    Row ``(e, c)`` against column ``(a, c)`` is ``|K_e| / 3`` when vertex a
    belongs to triangle e.  Multiplying a director coefficient vector by
    this matrix tests it against element indicator functions; its transpose
    tests a P0 field against the hat functions.
    """
    cache = _cache(mesh)
    if "M_dw" not in cache:
        t = mesh.triangles
        nt = len(t)
        e = np.arange(nt)
        rows = (2 * e[:, None, None] + np.arange(2)[None, None, :]).repeat(3, axis=1)
        cols = 2 * t[:, :, None] + np.arange(2)[None, None, :]
        vals = np.broadcast_to(mesh.element_area[:, None, None] / 3.0, rows.shape)
        M = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                          shape=(2 * nt, 2 * mesh.n_vertices))
        M.sort_indices()
        cache["M_dw"] = M
    return cache["M_dw"]


def gradients(field, mesh):
    """Per-element Jacobians ``J[e, c, i] = d(field_c)/dx_i`` of a P1 field."""
    field = np.asarray(field, dtype=float)
    v = field[mesh.triangles]
    if field.ndim == 1:
        return np.matmul(v[:, None, :], mesh.element_grad)[:, 0, :]
    return np.matmul(v.transpose(0, 2, 1), mesh.element_grad)


def scatter_to_vertices(mesh, local):
    """Sum per-element vertex contributions ``local[e, a(, c)]`` into nodal arrays."""
    idx = mesh.triangles.ravel()
    n = mesh.n_vertices
    if local.ndim == 2:
        return np.bincount(idx, weights=local.ravel(), minlength=n)
    flat = local.reshape(-1, local.shape[-1])
    return np.column_stack([np.bincount(idx, weights=flat[:, c], minlength=n) for c in range(flat.shape[1])])


def assemble_Ew(mesh, d_prev, lam, gamma, k):
    """Per-element blocks |K| (gamma I + lam k J J^T), J the director Jacobian."""
    J = gradients(d_prev, mesh)
    JJt = np.matmul(J, J.transpose(0, 2, 1))
    blocks = mesh.element_area[:, None, None] * (gamma * np.eye(2)[None] + lam * k * JJt)
    return BlockDiag2x2.from_blocks(blocks)


def assemble_Eu(mesh, d_prev):
    """Elastic-force coupling, shape ``(2 nv, 2 nt)``: row (a, c), column (e, c')."""
    J = gradients(d_prev, mesh)                      # (e, c', c)
    t = mesh.triangles
    nt = len(t)
    rows = np.broadcast_to((2 * t)[:, :, None, None] + np.arange(2)[None, None, :, None], (nt, 3, 2, 2))
    cols = np.broadcast_to(2 * np.arange(nt)[:, None, None, None] + np.arange(2)[None, None, None, :],
                           (nt, 3, 2, 2))
    # entry (a, c; e, c') = J[e, c', c] |K| / 3
    vals = (mesh.element_area[:, None, None] / 3.0) * np.transpose(J, (0, 2, 1))
    vals = np.broadcast_to(vals[:, None, :, :], (nt, 3, 2, 2))
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(2 * mesh.n_vertices, 2 * nt))


def assemble_Fw(mesh, d_prev, u_prev, p_prev, k):
    """Load ``((u_prev - k grad p_prev) . grad) d_prev`` tested on P0 vectors."""
    J = gradients(d_prev, mesh)
    v = u_prev[mesh.triangles].mean(axis=1) - k * gradients(p_prev, mesh)
    return (mesh.element_area[:, None] * np.matmul(J, v[:, :, None])[:, :, 0]).ravel()


def assemble_Feps(mesh, d_prev, eps, degree=4, outer_levels=3):
    """Penalty force tested on P1 vector hats.

    Where all nodal |d| <= 1 the director stays in the unit ball on the
    whole element and the integrand is a degree-4 polynomial, so the
    ``degree`` rule is exact.  Elements reaching the truncated branch see a
    kink at |d| = 1 and use the rule subdivided ``outer_levels`` times.
    """
    rule = quadrature(degree)
    dn = np.asarray(d_prev, dtype=float)[mesh.triangles]
    local = mesh.element_area[:, None, None] * np.matmul(rule.points.T * rule.weights,
                                                         f_tilde(np.matmul(rule.points, dn), eps))
    if outer_levels:
        outer = np.flatnonzero(np.max(np.sum(dn * dn, axis=2), axis=1) > 1.0)
        if outer.size:
            fine = composite_quadrature(degree, outer_levels)
            fq = f_tilde(np.matmul(fine.points, dn[outer]), eps)
            local[outer] = mesh.element_area[outer, None, None] * np.matmul(fine.points.T * fine.weights, fq)
    return scatter_to_vertices(mesh, local).ravel()


def assemble_Fu(mesh, p_prev):
    """Pressure gradient tested on P1 vector hats."""
    g = gradients(p_prev, mesh)
    local = np.broadcast_to((mesh.element_area[:, None] / 3.0 * g)[:, None, :], (mesh.n_triangles, 3, 2))
    return scatter_to_vertices(mesh, local).ravel()


def divergence(u, mesh):
    J = gradients(u, mesh)
    return J[:, 0, 0] + J[:, 1, 1]


def assemble_Fp(mesh, u_tilde):
    """Divergence of a P1 vector field tested on P1 scalar hats."""
    div = divergence(u_tilde, mesh)
    return scatter_to_vertices(mesh, np.repeat((mesh.element_area * div / 3.0)[:, None], 3, axis=1))


def local_pi0_stabilization(mesh, tau):
    area = mesh.element_area[:, None, None]
    Mk = area * _LOCAL_MASS[None]
    m = Mk.sum(axis=2)
    return tau * (Mk - np.einsum("ea,eb->eab", m, m) / area)


def assemble_Jp(mesh, S, nu):
    """Local-projection pressure stabilization (p - Pi0 p, q - Pi0 q) * S / nu."""
    return scatter_scalar(mesh, local_pi0_stabilization(mesh, S / nu))


def pi0_project(field, mesh):
    """Element averages of a P1 field (its L2 projection onto constants)."""
    return np.asarray(field, dtype=float)[mesh.triangles].mean(axis=1)


def interpolate_nodal(f, mesh):
    """Nodal interpolant of ``f(x, y)``; vector results may be (2, n) or (n, 2)."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.asarray(f(x, y), dtype=float)
    n = mesh.n_vertices
    if vals.ndim == 0:
        return np.full(n, float(vals))
    if vals.shape == (2, n) and n != 2:
        return np.ascontiguousarray(vals.T)
    if vals.shape[0] == 2 and vals.ndim == 1:
        return np.tile(vals, (n, 1))
    return vals


@dataclass
class EOSVelocity:
    """End-of-step velocity ``u_tilde - k grad p`` (P1 plus elementwise constant)."""

    u_tilde: np.ndarray   # (nv, 2)
    grad_p: np.ndarray    # (nt, 2)
    k: float

    def element_values(self, mesh, bary):
        """Velocity at barycentric point(s) ``bary`` (q, 3) of every element: (nt, q, 2)."""
        uq = np.matmul(np.atleast_2d(bary), self.u_tilde[mesh.triangles])
        return uq - self.k * self.grad_p[:, None, :]


def _p1_l2_sq(field, mesh):
    v = np.asarray(field, dtype=float)[mesh.triangles]     # (e, 3[, c])
    sq = (v ** 2).sum(axis=1)
    s = v.sum(axis=1) ** 2
    if v.ndim == 3:
        sq, s = sq.sum(axis=-1), s.sum(axis=-1)
    return float(np.sum(mesh.element_area * (sq + s)) / 12.0)


def _classify(field, mesh, space):
    if isinstance(field, EOSVelocity):
        return "EOS"
    if space is not None:
        return space
    n = np.asarray(field).shape[0]
    if n == mesh.n_vertices:
        return "P1"
    if n == mesh.n_triangles:
        return "P0"
    raise ValueError(f"field of length {n} does not live on this mesh")


def norms(field, mesh, which="L2", space=None):
    """L2, H1-semi, H1 or nodal max norm of a P1, P0 or end-of-step field.

    ``space`` ("P1" or "P0") disambiguates meshes where the vertex and
    triangle counts coincide.
    """
    kind = _classify(field, mesh, space)
    if kind == "EOS":
        if which != "L2":
            raise ValueError(f"norm {which!r} is not defined for end-of-step velocities")
        u, g = field.u_tilde, field.grad_p
        ubar = u[mesh.triangles].mean(axis=1)
        val = (_p1_l2_sq(u, mesh)
               - 2.0 * field.k * np.sum(mesh.element_area * np.sum(g * ubar, axis=1))
               + field.k ** 2 * np.sum(mesh.element_area * np.sum(g * g, axis=1)))
        return float(np.sqrt(max(val, 0.0)))
    f = np.asarray(field, dtype=float)
    if kind == "P0":
        if which == "L2":
            sq = f * f if f.ndim == 1 else np.sum(f * f, axis=1)
            return float(np.sqrt(np.sum(mesh.element_area * sq)))
        if which == "Linf-nodal":
            return float(np.max(np.abs(f)) if f.ndim == 1 else np.max(np.linalg.norm(f, axis=1)))
        raise ValueError(f"norm {which!r} is not defined for piecewise-constant fields")
    if which == "L2":
        return float(np.sqrt(_p1_l2_sq(f, mesh)))
    if which in ("H1-semi", "H1"):
        J = gradients(f, mesh)
        semi = float(np.sum(mesh.element_area * np.sum(J.reshape(len(J), -1) ** 2, axis=1)))
        if which == "H1":
            semi += _p1_l2_sq(f, mesh)
        return float(np.sqrt(semi))
    if which == "Linf-nodal":
        return float(np.max(np.abs(f)) if f.ndim == 1 else np.max(np.linalg.norm(f, axis=1)))
    raise ValueError(f"unknown norm {which!r}")
