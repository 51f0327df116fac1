"""
Deterministic CSV and JSON output.

Every file starts with the same provenance header (tool version, seed, config
hash). CSV floats are written with ``%.17g``; JSON floats use Python's
shortest round-trip representation, so both formats reload bit-exactly.
Column order is fixed by the converters below and JSON keys are sorted.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ._version import __version__

__all__ = [
    "ReportHeader",
    "config_hash",
    "write_csv",
    "write_json",
    "emit_report",
    "trajectory_columns",
    "density_columns",
    "flux_columns",
    "path_columns",
    "phase_columns",
    "epr_columns",
    "eit_field_columns",
    "jsonable",
]


def jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON types; non-finite floats become strings."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def config_hash(config: Mapping) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form of ``config``."""
    text = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ReportHeader:
    seed: int | None
    config_hash: str
    version: str = __version__
    tool: str = "ldthermo"

    @classmethod
    def for_config(cls, config: Mapping, seed=None) -> "ReportHeader":
        return cls(None if seed is None else int(seed), config_hash(config))

    def as_dict(self) -> dict:
        return {"tool": self.tool, "version": self.version, "seed": self.seed, "config_hash": self.config_hash}

    def line(self) -> str:
        return f"# tool={self.tool} version={self.version} seed={self.seed} config_hash={self.config_hash}"


def _fmt(v) -> str:
    return "%.17g" % v


def write_csv(path, columns: Mapping[str, np.ndarray], header: ReportHeader) -> str:
    """Write equal-length columns in the given order; returns the path."""
    names = list(columns)
    if not names:
        raise ValueError("no columns to write")
    data = [np.asarray(columns[k], dtype=float).reshape(-1) for k in names]
    n = len(data[0])
    if any(len(c) != n for c in data):
        raise ValueError("CSV columns differ in length")
    lines = [header.line(), ",".join(names)]
    table = np.column_stack(data) if n else np.empty((0, len(names)))
    lines.extend(",".join(_fmt(v) for v in row) for row in table)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def write_json(path, payload: Mapping, header: ReportHeader) -> str:
    doc = dict(jsonable(payload))
    doc["header"] = header.as_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return str(path)


def emit_report(results: Mapping, out_dir, name: str, fmt: str, header: ReportHeader) -> str:
    """Write ``results`` as ``<out_dir>/<name>.<fmt>``.

    For ``csv`` the results must map column names to arrays; for ``json`` any
    mapping of JSON-convertible values.
    """
    if not results:
        raise ValueError("results are empty")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.{fmt}")
    if fmt == "csv":
        return write_csv(path, results, header)
    if fmt == "json":
        return write_json(path, results, header)
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


def _coords(points, prefix="x"):
    points = np.asarray(points, dtype=float)
    points = points.reshape(-1, points.shape[-1])
    return {f"{prefix}{i + 1}": points[:, i] for i in range(points.shape[1])}


def trajectory_columns(traj) -> dict:
    """``t, path_id, x1..xn`` in path-major order."""
    n_paths, n_t, dim = traj.states.shape
    cols = {"t": np.tile(traj.times, n_paths), "path_id": np.repeat(np.arange(n_paths), n_t)}
    cols.update(_coords(traj.states.reshape(-1, dim)))
    return cols


def density_columns(density) -> dict:
    cols = _coords(density.grid.points())
    cols["p"] = density.values.reshape(-1)
    return cols


def flux_columns(flux) -> dict:
    cols = _coords(flux.grid.points())
    dim = flux.grid.dim
    J = flux.J.reshape(-1, dim)
    H = flux.hill.reshape(-1, dim)
    for i in range(dim):
        cols[f"J{i + 1}"] = J[:, i]
    for i in range(dim):
        cols[f"hill{i + 1}"] = H[:, i]
    return cols


def path_columns(model, path) -> dict:
    from .action import node_lagrangian

    cols = {"s": path.times}
    cols.update(_coords(path.nodes))
    cols["L"] = node_lagrangian(model, path)
    return cols


def phase_columns(traj) -> dict:
    cols = {"t": traj.t}
    cols.update(_coords(traj.x))
    cols.update(_coords(traj.y, "y"))
    cols["H"] = traj.H
    return cols


def epr_columns(points, epr) -> dict:
    cols = _coords(points)
    cols["total"] = np.asarray(epr.total).reshape(-1)
    cols["dissipation"] = np.asarray(epr.free_energy_dissipation).reshape(-1)
    cols["housekeeping"] = np.asarray(epr.housekeeping).reshape(-1)
    return cols


def eit_field_columns(field) -> dict:
    xp = field.x_grid.points()
    yp = field.y_grid.points()
    nx, ny = len(xp), len(yp)
    cols = _coords(np.repeat(xp, ny, axis=0))
    cols.update(_coords(np.tile(yp, (nx, 1)), "y"))
    cols["phi"] = field.values.reshape(-1)
    return cols
