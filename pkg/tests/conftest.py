import numpy as np
import pytest

from nematic_fem.mesh import generate_rectangle_mesh
from nematic_fem.scheme import SimState

import oracle

# every structured rectangle mesh with at most 8 triangles
SMALL_SHAPES = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1), (2, 2)]


def small_meshes():
    out = []
    for nx, ny in SMALL_SHAPES:
        out.append((f"{nx}x{ny}", generate_rectangle_mesh(-0.5, 1.0, 0.0, 0.75, nx, ny)))
    rng = np.random.default_rng(7)
    out.append(("2x2-perturbed", oracle.perturbed_mesh(generate_rectangle_mesh(0, 1, 0, 1, 2, 2), rng, 0.4)))
    return out


@pytest.fixture(params=small_meshes(), ids=lambda m: m[0])
def small_mesh(request):
    return request.param[1]


def random_state(mesh, rng, scale=1.0, radius=(0.5, 1.0)):
    """Random director with nodal lengths in ``radius``, velocity zero on the boundary, zero-mean pressure."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    theta = rng.uniform(0, 2 * np.pi, nv)
    r = rng.uniform(*radius, nv)
    d = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    u = scale * rng.normal(size=(nv, 2))
    u[mesh.boundary_vertex] = 0.0
    p = rng.normal(size=nv)
    p -= p.mean()
    w = rng.normal(size=(nt, 2))
    return SimState(0, 0.0, d, u, p, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
