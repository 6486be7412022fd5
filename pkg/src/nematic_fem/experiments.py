"""Numerical experiments: defect annihilation, time convergence, stability sweep."""
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .diagnostics import annihilation_time, classify_stability, energies, energy_decay_audit, error_norms
from .mesh import generate_rectangle_mesh
from .scheme import StepError, StepOperators, advance, check_h4, initialize

log = logging.getLogger(__name__)

THREADS_ENV = "LC_SOLVER_THREADS"


def solver_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be an integer >= 1, got {raw!r}")
    return n


def annihilation_director(offset, eps=0.05):
    """Two +1/2-like defects on the x axis at x = +-sqrt(offset)."""
    def d0(x, y):
        dt = np.array([x * x + y * y - offset, y])
        return dt / np.sqrt(np.sum(dt * dt, axis=0) + eps * eps)
    return d0


def convergence_director(x, y):
    a = np.pi * (np.cos(np.pi * x) + np.sin(np.pi * y))
    return np.array([np.sin(a), np.cos(a)])


def zero_velocity(x, y):
    z = np.zeros_like(np.asarray(x, dtype=float))
    return np.array([z, z])


@dataclass
class RunResult:
    history: list
    state: object
    failure: Optional[StepError] = None
    stopped_early: bool = False
    snapshots: dict = field(default_factory=dict)

    @property
    def last_time(self):
        return self.history[-1].time


def run(state, mesh, params, n_steps=None, snapshot_steps=(), blowup_factor=None, progress=None):
    """March ``n_steps`` steps from ``state``.

    A failing step ends the run with ``failure`` set; the history stops at
    the last valid state.  With ``blowup_factor`` set the run also stops as
    soon as the total energy leaves the admissible range.
    """
    n_steps = params.n_steps if n_steps is None else n_steps
    ops = StepOperators(mesh, params)
    history = [energies(state, mesh, params)]
    e0 = history[0].total
    snapshot_steps = set(snapshot_steps)
    snaps = {}
    if state.n in snapshot_steps:
        snaps[state.n] = state.copy()
    result = RunResult(history, state, snapshots=snaps)
    for _ in range(n_steps):
        try:
            state, rec = advance(state, mesh, params, ops)
        except StepError as exc:
            log.warning("step %d failed at t=%.6g: %s", state.n + 1, history[-1].time, exc)
            result.failure = exc
            break
        history.append(rec)
        result.state = state
        if state.n in snapshot_steps:
            snaps[state.n] = state.copy()
        if progress is not None:
            progress(rec)
        if blowup_factor is not None and (not np.isfinite(rec.total) or rec.total > blowup_factor * e0):
            result.stopped_early = True
            break
    return result


def _mesh(cfg, nx=None, ny=None):
    x0, x1, y0, y1 = cfg.domain
    return generate_rectangle_mesh(x0, x1, y0, y1, nx or cfg.nx, ny or cfg.ny)


@dataclass
class AnnihilationResult:
    T_A: float
    peak_kinetic: float
    history: list
    snapshots: dict
    violations: list
    stable: bool
    failure: Optional[StepError] = None
    mesh: object = None

    def summary(self):
        return {
            "experiment": "annihilation",
            "T_A": self.T_A,
            "peak_kinetic": self.peak_kinetic,
            "n_steps": len(self.history) - 1,
            "final_time": self.history[-1].time,
            "stable": self.stable,
            "energy_violations": len(self.violations),
            "max_d_inf": max(r.d_inf for r in self.history),
            "initial_elastic": self.history[0].elastic,
            "final_elastic": self.history[-1].elastic,
            "failure": None if self.failure is None else str(self.failure),
        }


def annihilation_experiment(config=None, progress=None):
    cfg = config or RunConfig()
    params = cfg.sim_params()
    mesh = _mesh(cfg)
    check_h4(mesh, params)
    state = initialize(annihilation_director(cfg.defect_offset, cfg.eps), zero_velocity, mesh, params)
    snap_steps = {int(round(t / params.k)) for t in cfg.snapshot_times if round(t / params.k) <= params.n_steps}
    res = run(state, mesh, params, snapshot_steps=snap_steps, progress=progress)
    T_A, peak = annihilation_time(res.history)
    return AnnihilationResult(
        T_A=T_A,
        peak_kinetic=peak,
        history=res.history,
        snapshots=res.snapshots,
        violations=energy_decay_audit(res.history, params),
        stable=classify_stability(res.history, cfg.blowup_factor),
        failure=res.failure,
        mesh=mesh,
    )


@dataclass
class RateTable:
    """Errors at the final time against a fine-step reference, per level."""
    ks: list
    k_ref: float
    errors: dict
    rates: dict

    QUANTITIES = ("d", "u", "p")
    NORMS = ("L2", "H1")

    @classmethod
    def from_errors(cls, ks, k_ref, errors):
        rates = {}
        for key, e in errors.items():
            r = []
            for a, b in zip(e[:-1], e[1:]):
                r.append(math.log2(a / b) if a > 0 and b > 0 else None)
            rates[key] = r
        return cls(list(ks), k_ref, errors, rates)

    def rows(self):
        out = []
        for i, k in enumerate(self.ks):
            row = {"k": k}
            for key in self.errors:
                row[f"err_{key}"] = self.errors[key][i]
                row[f"rate_{key}"] = self.rates[key][i - 1] if i > 0 else None
            out.append(row)
        return out

    def columns(self):
        cols = ["k"]
        for key in self.errors:
            cols += [f"err_{key}", f"rate_{key}"]
        return cols

    def summary(self):
        return {"experiment": "convergence", "ks": self.ks, "k_ref": self.k_ref,
                "errors": self.errors, "rates": self.rates}


def _final_fields(cfg, mesh, k):
    params = cfg.sim_params(k=k)
    n = int(round(cfg.T / k))
    state = initialize(convergence_director, zero_velocity, mesh, params)
    res = run(state, mesh, params, n_steps=n)
    if res.failure is not None:
        raise RuntimeError(f"convergence sub-run with k={k:g} failed at t={res.last_time:g}") from res.failure
    s = res.state
    return {"d": s.d, "u": s.u_tilde, "p": s.p}


def convergence_experiment(config=None, k_ref=None, progress=None):
    """Time accuracy study; the velocity compared is the intermediate one."""
    cfg = config or RunConfig(experiment="convergence", domain=[0.0, 1.0, -0.5, 0.5], nx=20, ny=20, T=0.016)
    mesh = _mesh(cfg)
    ks = list(cfg.k_levels)
    k_ref = min(ks) / cfg.ref_divisor if k_ref is None else k_ref
    ref = _final_fields(cfg, mesh, k_ref)
    errors = {f"{n}_{q}": [] for q in RateTable.QUANTITIES for n in RateTable.NORMS}
    for k in ks:
        if progress is not None:
            progress(f"convergence level k={k:g}")
        f = _final_fields(cfg, mesh, k)
        for q in RateTable.QUANTITIES:
            for n in RateTable.NORMS:
                errors[f"{n}_{q}"].append(error_norms(f[q], ref[q], mesh, n))
    return RateTable.from_errors(ks, k_ref, errors)


SWEEP_COLUMNS = ("k", "nx", "h", "r1", "r2", "r3", "stable", "T_A", "peak_kinetic", "steps_run", "violations")


def sweep_cell(cfg, k, nx):
    params = cfg.sim_params(k=k, h4_mode="warn")
    mesh = _mesh(cfg, nx, nx)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = check_h4(mesh, params)
    state = initialize(annihilation_director(cfg.defect_offset, cfg.eps), zero_velocity, mesh, params)
    res = run(state, mesh, params, blowup_factor=cfg.blowup_factor)
    stable = res.failure is None and not res.stopped_early and classify_stability(res.history, cfg.blowup_factor)
    row = {"k": k, "nx": nx, "h": mesh.h_max, "r1": rep.r1, "r2": rep.r2, "r3": rep.r3,
           "stable": stable, "T_A": None, "peak_kinetic": None, "steps_run": len(res.history) - 1,
           "violations": None}
    if stable:
        row["T_A"], row["peak_kinetic"] = annihilation_time(res.history)
        row["violations"] = len(energy_decay_audit(res.history, params))
    return row


def _sweep_cell_args(args):
    return sweep_cell(*args)


def stability_sweep(config=None, progress=None, threads=None):
    """Run every (k, nx) cell; rows are ordered by (k, nx) regardless of threads."""
    cfg = config or RunConfig(experiment="stability", T=0.4, pressure_solver="direct")
    threads = solver_threads() if threads is None else threads
    cells = [(cfg, k, nx) for k in cfg.sweep_k for nx in cfg.sweep_nx]
    if threads == 1:
        rows = []
        for c in cells:
            rows.append(sweep_cell(*c))
            if progress is not None:
                progress(rows[-1])
        return rows
    with ProcessPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(_sweep_cell_args, cells))
    if progress is not None:
        for r in rows:
            progress(r)
    return rows
