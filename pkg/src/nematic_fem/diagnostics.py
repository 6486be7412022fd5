"""Energy bookkeeping and error measurement."""
from dataclasses import asdict, dataclass

import numpy as np

from . import assembly as asm
from .potential import penalty_energy

ENERGY_FIELDS = ("step", "time", "kinetic", "elastic", "penalty", "total", "grad_u_norm", "w_norm", "d_inf")


@dataclass
class EnergyRecord:
    step: int
    time: float
    kinetic: float
    elastic: float
    penalty: float
    total: float
    grad_u_norm: float
    w_norm: float
    d_inf: float

    def as_row(self):
        return [getattr(self, f) for f in ENERGY_FIELDS]

    def to_dict(self):
        return asdict(self)


def energies(state, mesh, params):
    """Kinetic (end-of-step velocity), elastic and penalty energy of a state."""
    u = asm.EOSVelocity(state.u_tilde, asm.gradients(state.p, mesh), params.k)
    kinetic = 0.5 * asm.norms(u, mesh, "L2") ** 2
    elastic = 0.5 * params.lam * asm.norms(state.d, mesh, "H1-semi") ** 2
    penalty = params.lam * penalty_energy(state.d, params.eps, mesh)
    return EnergyRecord(
        step=int(state.n),
        time=float(state.t),
        kinetic=kinetic,
        elastic=elastic,
        penalty=penalty,
        total=kinetic + elastic + penalty,
        grad_u_norm=asm.norms(state.u_tilde, mesh, "H1-semi"),
        w_norm=asm.norms(state.w, mesh, "L2", space="P0"),
        d_inf=asm.norms(state.d, mesh, "Linf-nodal"),
    )


def energy_decay_audit(history, params, eta=1e-8):
    """Steps whose energy change breaks the discrete dissipation inequality.

    A step n -> n+1 is flagged when
    E(n+1) - E(n) + k/2 (nu |grad u_tilde|^2 + lam gamma |w|^2) > eta E(0).
    Returns the list of offending step indices (of the later record).
    """
    if len(history) < 2:
        return []
    slack = eta * history[0].total
    bad = []
    for prev, cur in zip(history[:-1], history[1:]):
        dissipation = 0.5 * params.k * (params.nu * cur.grad_u_norm ** 2
                                        + params.lam * params.gamma * cur.w_norm ** 2)
        excess = cur.total - prev.total + dissipation
        if not np.isfinite(excess) or excess > slack:
            bad.append(cur.step)
    return bad


def classify_stability(history, blowup_factor=10.0):
    """True when the total energy stays finite and below ``blowup_factor`` E(0)."""
    if not history:
        return False
    e0 = history[0].total
    for rec in history:
        vals = rec.as_row()
        if not all(np.isfinite(v) for v in vals) or rec.total > blowup_factor * e0:
            return False
    return True


def annihilation_time(history):
    """Time of the (earliest) maximum kinetic energy and that maximum."""
    kin = np.array([r.kinetic for r in history])
    i = int(np.argmax(kin))
    return history[i].time, float(kin[i])


def error_norms(field_a, field_b, mesh, norm="L2"):
    a = np.asarray(field_a, dtype=float)
    b = np.asarray(field_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"fields live on different meshes: shapes {a.shape} and {b.shape}")
    return asm.norms(a - b, mesh, norm)
