"""Truncated Ginzburg-Landau potential and its gradient.

Inside the unit ball the potential is the usual quartic double well
(|d|^2 - 1)^2 / (4 eps^2); outside it grows only quadratically,
(|d| - 1)^2 / eps^2, which keeps its Hessian bounded by C / eps^2.
Both functions accept a single 2-vector or a stack of shape (..., 2).
"""
from dataclasses import dataclass

import numpy as np

from .mesh import quadrature


@dataclass(frozen=True)
class PenaltyParams:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def _eps(eps):
    return eps.epsilon if isinstance(eps, PenaltyParams) else float(eps)


def F_tilde(d, eps):
    e2 = _eps(eps) ** 2
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    inner = (r * r - 1.0) ** 2 / (4.0 * e2)
    outer = (r - 1.0) ** 2 / e2
    out = np.where(r <= 1.0, inner, outer)
    return float(out) if out.ndim == 0 else out


def F_untruncated(d, eps):
    r2 = np.sum(np.asarray(d, dtype=float) ** 2, axis=-1)
    return (r2 - 1.0) ** 2 / (4.0 * _eps(eps) ** 2)


def f_tilde(d, eps):
    """Gradient of :func:`F_tilde` with respect to d."""
    e2 = _eps(eps) ** 2
    d = np.asarray(d, dtype=float)
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    inner = (r * r - 1.0) * d / e2
    # outer branch only selected where r > 1, so the division is safe there
    safe_r = np.where(r > 1.0, r, 1.0)
    outer = 2.0 * (r - 1.0) * d / (safe_r * e2)
    return np.where(r <= 1.0, inner, outer)


def penalty_energy(d, eps, mesh, degree=4):
    """Integral of the truncated potential of a P1 director field."""
    rule = quadrature(degree)
    dq = np.matmul(rule.points, d[mesh.triangles])
    vals = F_tilde(dq, eps)
    return float(np.sum(mesh.element_area * (vals @ rule.weights)))
