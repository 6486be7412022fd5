"""Result files: energy CSV, legacy VTK snapshots, summary JSON."""
import csv
import json
import os
from contextlib import contextmanager

import numpy as np
from filelock import FileLock, Timeout

from .diagnostics import ENERGY_FIELDS, EnergyRecord
from .scheme import ConfigurationError

LOCK_NAME = ".nematic_fem.lock"


def _fmt(x):
    return format(float(x), ".17g")


def write_energy_csv(history, path):
    if not history:
        raise ValueError("cannot write an empty energy history")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ENERGY_FIELDS) + "\n")
        for rec in history:
            row = rec.as_row()
            fh.write(",".join([str(int(row[0]))] + [_fmt(v) for v in row[1:]]) + "\n")


def read_energy_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ENERGY_FIELDS:
            raise ValueError(f"unexpected energy CSV header: {header}")
        return [EnergyRecord(int(r[0]), *map(float, r[1:])) for r in reader]


def write_table_csv(rows, columns, path):
    """Generic table writer; floats use 17 significant digits, None is empty."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return _fmt(v)
        return str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(cell(row.get(c)) for c in columns) + "\n")


def _vec3(a):
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    return "\n".join(f"{_fmt(x)} {_fmt(y)} 0" for x, y in a)


def write_vtk_snapshot(mesh, state, path):
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = [
        "# vtk DataFile Version 3.0",
        f"nematic_fem step {state.n} t={_fmt(state.t)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
        _vec3(mesh.vertices),
        f"CELLS {nt} {4 * nt}",
        "\n".join(f"3 {a} {b} {c}" for a, b, c in mesh.triangles),
        f"CELL_TYPES {nt}",
        "\n".join(["5"] * nt),
        f"POINT_DATA {nv}",
        "VECTORS director double",
        _vec3(state.d),
        "VECTORS velocity_tilde double",
        _vec3(state.u_tilde),
        "SCALARS pressure double 1",
        "LOOKUP_TABLE default",
        "\n".join(_fmt(v) for v in np.asarray(state.p, dtype=float)),
        f"CELL_DATA {nt}",
        "VECTORS w double",
        _vec3(state.w),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_summary_json(summary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


@contextmanager
def output_dir_lock(out_dir):
    """Create ``out_dir`` and hold an exclusive lock on it for the block."""
    os.makedirs(out_dir, exist_ok=True)
    lock = FileLock(os.path.join(out_dir, LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except Timeout as exc:
        raise ConfigurationError(f"output directory {out_dir!r} is in use by another run") from exc
    try:
        yield out_dir
    finally:
        lock.release()
