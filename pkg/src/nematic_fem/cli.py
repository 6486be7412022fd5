"""Command-line driver.

Exit codes: 0 success, 1 invalid configuration or usage, 2 solver failure.
Progress goes to stderr; result files only go to the output directory.
"""
import argparse
import logging
import os
import sys
import warnings

from . import __version__
from .config import config_from_dict, load_config
from .experiments import annihilation_experiment, convergence_experiment, stability_sweep, SWEEP_COLUMNS
from .mesh import generate_rectangle_mesh, mesh_metrics
from .output import (output_dir_lock, write_energy_csv, write_summary_json, write_table_csv,
                     write_vtk_snapshot)
from .scheme import ConfigurationError, StepError, check_h4
from .sparse import SolverError

log = logging.getLogger("nematic_fem")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _progress_every(n):
    def cb(rec):
        if rec.step % n == 0:
            log.info("step %d  t=%.4f  kinetic=%.6g  total=%.6g", rec.step, rec.time, rec.kinetic, rec.total)
    return cb


def report_annihilation(cfg):
    from .plotting import plot_energies, plot_snapshot

    res = annihilation_experiment(cfg, progress=_progress_every(max(1, int(round(0.05 / cfg.k)))))
    out = cfg.output_dir
    write_energy_csv(res.history, os.path.join(out, "energies.csv"))
    for n, state in sorted(res.snapshots.items()):
        stem = os.path.join(out, f"snapshot_t{state.t:.4f}")
        write_vtk_snapshot(res.mesh, state, stem + ".vtk")
        plot_snapshot(res.mesh, state, stem + ".png")
    plot_energies(res.history, os.path.join(out, "energies.png"))
    write_summary_json(res.summary(), os.path.join(out, "summary.json"))
    log.info("T_A = %.4f, peak kinetic energy = %.6g", res.T_A, res.peak_kinetic)
    if res.failure is not None:
        log.error("run stopped at t=%.6g: %s", res.history[-1].time, res.failure)
        return EXIT_SOLVER
    return EXIT_OK


def report_convergence(cfg):
    from .plotting import plot_convergence

    table = convergence_experiment(cfg, progress=log.info)
    out = cfg.output_dir
    write_table_csv(table.rows(), table.columns(), os.path.join(out, "rates.csv"))
    plot_convergence(table, os.path.join(out, "convergence.png"))
    write_summary_json(table.summary(), os.path.join(out, "summary.json"))
    for key, rates in table.rates.items():
        log.info("%s rates: %s", key, ", ".join("--" if r is None else f"{r:.4f}" for r in rates))
    return EXIT_OK


def report_stability(cfg):
    from .plotting import plot_stability

    def cb(row):
        log.info("k=%g nx=%d r2=%.6g stable=%s", row["k"], row["nx"], row["r2"], row["stable"])

    rows = stability_sweep(cfg, progress=cb)
    out = cfg.output_dir
    write_table_csv(rows, SWEEP_COLUMNS, os.path.join(out, "stability.csv"))
    plot_stability(rows, os.path.join(out, "stability.png"))
    write_summary_json({"experiment": "stability", "cells": rows}, os.path.join(out, "summary.json"))
    return EXIT_OK


REPORTS = {"annihilation": report_annihilation, "convergence": report_convergence, "stability": report_stability}


def run_config(cfg):
    with output_dir_lock(cfg.output_dir):
        write_summary_json(cfg.to_dict(), os.path.join(cfg.output_dir, "config.json"))
        return REPORTS[cfg.experiment](cfg)


def _mesh_info(cfg):
    x0, x1, y0, y1 = cfg.domain
    mesh = generate_rectangle_mesh(x0, x1, y0, y1, cfg.nx, cfg.ny)
    m = mesh_metrics(mesh)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = check_h4(mesh, cfg.sim_params(h4_mode="warn"))
    print(f"h = {m['h_max']!r}")
    print(f"h_min = {m['h_min']!r}")
    print(f"vertices = {m['n_vertices']}")
    print(f"triangles = {m['n_triangles']}")
    print(f"area = {m['total_area']!r}")
    print(f"k/(h eps^2) = {rep.r1!r}")
    print(f"k/(h^1.5 eps) = {rep.r2!r}")
    print(f"h/eps = {rep.r3!r}")
    return EXIT_OK


def _setup_logging(level):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    for name in ("nematic_fem", "py.warnings"):
        lg = logging.getLogger(name)
        lg.handlers[:] = [handler]
        lg.setLevel(level)
        lg.propagate = False
    logging.captureWarnings(True)


def build_parser():
    p = _Parser(prog="nematic-fem", description="Finite element simulation of penalized nematic flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only report warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment described by a JSON config")
    r.add_argument("config")

    a = sub.add_parser("annihilation", help="defect annihilation run")
    a.add_argument("--k", type=float)
    a.add_argument("--nx", type=int, help="cells per side (both directions)")
    a.add_argument("--eps", type=float)
    a.add_argument("--T", type=float)
    a.add_argument("--out", default="results/annihilation")

    c = sub.add_parser("convergence", help="time convergence study")
    c.add_argument("--out", default="results/convergence")

    s = sub.add_parser("stability", help="(k, h) stability sweep")
    s.add_argument("--out", default="results/stability")

    m = sub.add_parser("mesh-info", help="print mesh size and step-size ratios for a config")
    m.add_argument("config")
    return p


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    _setup_logging(logging.WARNING if args.quiet else logging.INFO)
    try:
        if args.command == "mesh-info":
            return _mesh_info(load_config(args.config))
        if args.command == "run":
            return run_config(load_config(args.config))
        overrides = {"experiment": args.command, "output_dir": args.out}
        if args.command == "annihilation":
            for key in ("k", "eps", "T"):
                if getattr(args, key) is not None:
                    overrides[key] = getattr(args, key)
            if args.nx is not None:
                overrides["nx"] = overrides["ny"] = args.nx
        return run_config(config_from_dict(overrides))
    except (ConfigurationError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (StepError, SolverError, RuntimeError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
