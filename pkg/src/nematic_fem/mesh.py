"""Structured triangulations of rectangles and triangle quadrature rules."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Conforming triangle mesh with precomputed P1 element geometry.

    ``element_grad[e, i]`` is the (constant) gradient of the hat function of
    the i-th local vertex of triangle ``e``.
    """

    vertices: np.ndarray          # (nv, 2)
    triangles: np.ndarray         # (nt, 3), counter-clockwise
    boundary_vertex: np.ndarray   # (nv,) bool
    element_area: np.ndarray      # (nt,)
    element_grad: np.ndarray      # (nt, 3, 2)
    h_max: float
    bounds: tuple = field(default=(0.0, 1.0, 0.0, 1.0))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def edges(self):
        """Unique undirected edges as an (ne, 2) array of vertex pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def element_geometry(vertices, triangles):
    """Areas and hat-function gradients of every triangle."""
    p = vertices[triangles]                     # (nt, 3, 2)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * det
    grad = np.empty(p.shape)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grad[:, i, 0] = (y[:, j] - y[:, k]) / det
        grad[:, i, 1] = (x[:, k] - x[:, j]) / det
    return area, grad


def generate_rectangle_mesh(x0, x1, y0, y1, nx, ny):
    """Triangulate [x0, x1] x [y0, y1] with an nx-by-ny grid of cells.

    Every cell is cut along its lower-left to upper-right diagonal, so the
    longest edge of the mesh is the cell diagonal.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"nx and ny must be positive integers, got {nx}, {ny}")
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate rectangle: need x1 > x0 and y1 > y0")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10 = v00 + 1
    v01 = v00 + nx + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    boundary = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()

    area, grad = element_geometry(vertices, triangles)
    h_max = float(np.hypot((x1 - x0) / nx, (y1 - y0) / ny))
    return Mesh(vertices, triangles, boundary, area, grad, h_max, (x0, x1, y0, y1))


def mesh_metrics(mesh):
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    return {
        "h_max": float(lengths.max()),
        "h_min": float(lengths.min()),
        "total_area": float(mesh.element_area.sum()),
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
    }


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray    # (nq, 3) barycentric coordinates
    weights: np.ndarray   # (nq,), sum to 1
    degree: int


def _orbit(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


# symmetric 6-point degree-4 rule, constants resolved to 40 digits by Newton on the moment equations
_A1, _W1 = 0.4459484909159648863183292538830519883991, 0.2233815896780114656950070084331228043703
_A2, _W2 = 0.09157621350977074345957146340220150785433, 0.1099517436553218676383263249002105289631

_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: ([(0.5, 0.5, 0.0), (0.0, 0.5, 0.5), (0.5, 0.0, 0.5)], [1 / 3] * 3),
    4: (_orbit(_A1) + _orbit(_A2), [_W1] * 3 + [_W2] * 3),
}


def quadrature(degree):
    """Triangle rule exact for polynomials up to ``degree`` (1, 2 or 4)."""
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose from 1, 2, 4")
    pts, w = _RULES[degree]
    return QuadratureRule(np.array(pts, dtype=float), np.array(w, dtype=float), degree)


@lru_cache(maxsize=None)
def composite_quadrature(degree, levels):
    """``quadrature(degree)`` copied onto the 4**levels congruent subtriangles.

    Same polynomial degree, but far more accurate for integrands that are
    only piecewise smooth inside the element.
    """
    base = quadrature(degree)
    n = 2 ** levels
    pts, wts = [], []
    for i in range(n):
        for j in range(n - i):
            corners = [((i, j), (i + 1, j), (i, j + 1))]
            if i + j < n - 1:
                corners.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
            for tri in corners:
                # barycentric coordinates of the subtriangle corners
                V = np.array([[n - a - b, a, b] for a, b in tri], dtype=float) / n
                pts.append(base.points @ V)
                wts.append(base.weights / n ** 2)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), degree)
