"""Deterministic on-disk artifacts: CSV tables, JSON summaries, manifests
and flat binary phase-space snapshots.

Every CSV starts with a header row, uses the comma as separator, the dot as
decimal mark and 17 significant digits for floats, so rerunning a configured
pipeline reproduces files byte for byte.  JSON summaries embed the config
fingerprint that produced them; a manifest lists every artifact of a run
with its SHA-256 so a directory can be audited later.

The binary snapshot layout is a fixed little-endian header

    magic "SPNW" | uint32 version | uint32 n_x | uint32 n_p |
    float64 x0, lx, p0, lp, hbar, time

followed by the four Pauli-component arrays in C order.  Small grids can
also be dumped to CSV (one row per phase-space node) for inspection with
plain text tools.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .classical import ClassicalTrajectory, ControlSignal
from .errors import ConfigurationError
from .wigner import PhaseGrid, WignerState

__all__ = [
    "write_csv", "write_json", "sha256_file", "write_manifest",
    "write_trajectory_csv", "write_control_csv", "write_iteration_log",
    "write_diagnostics_csv", "write_sweep_csv", "write_state_binary",
    "read_state_binary", "write_state_csv",
]

SNAPSHOT_MAGIC = b"SPNW"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4s3I6d")
STATE_CSV_MAX_NODES = 16384


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write one table; floats carry 17 significant digits."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ConfigurationError(
                f"row of width {len(row)} under a header of width "
                f"{len(header)} in {path.name}")
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _jsonable(obj):
    """Recursively convert to plain JSON types; non-finite floats' only
    faithful JSON spelling is null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True)
                    + "\n")
    return path


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(outdir, fingerprint: str, paths: Sequence,
                   name: str = "manifest.json") -> Path:
    """List every artifact of a run with checksum and size."""
    outdir = Path(outdir)
    entries = []
    for p in sorted(Path(p) for p in paths):
        entries.append({"path": p.name, "sha256": sha256_file(p),
                        "bytes": p.stat().st_size})
    return write_json(outdir / name, {"config_fingerprint": fingerprint,
                                      "artifacts": entries})


def write_trajectory_csv(path, traj: ClassicalTrajectory) -> Path:
    header = ["t", "x1", "x2", "x3", "p1", "p2", "p3", "d1", "d2", "d3"]
    rows = np.column_stack([traj.times, traj.xs, traj.ps, traj.ds])
    return write_csv(path, header, rows)


def write_control_csv(path, u: ControlSignal) -> Path:
    header = ["t"] + [f"u{i + 1}" for i in range(u.n_controls)]
    rows = np.column_stack([u.times, u.values])
    return write_csv(path, header, rows)


def write_iteration_log(path, history: Sequence[dict],
                        fingerprint: str) -> Path:
    """Optimizer progress as JSON: one row per accepted iterate."""
    return write_json(path, {"config_fingerprint": fingerprint,
                             "iterations": list(history)})


def write_diagnostics_csv(path, diagnostics: np.ndarray,
                          columns: Sequence[str]) -> Path:
    return write_csv(path, list(columns), np.atleast_2d(diagnostics))


def write_sweep_csv(path, records: Sequence[dict],
                    columns: Sequence[str]) -> Path:
    rows = [[rec[c] for c in columns] for rec in records]
    return write_csv(path, list(columns), rows)


def write_state_binary(path, state: WignerState) -> Path:
    g = state.grid
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n_x, g.n_p,
                          g.x0, g.lx, g.p0, g.lp, state.hbar, state.time)
    payload = np.ascontiguousarray(state.data, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)
    return Path(path)


def read_state_binary(path) -> WignerState:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ConfigurationError(f"{path} is too short for a snapshot")
    magic, version, n_x, n_p, x0, lx, p0, lp, hbar, time = \
        _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise ConfigurationError(f"{path} is not a phase-space snapshot "
                                 f"(magic {magic!r})")
    if version != SNAPSHOT_VERSION:
        raise ConfigurationError(f"{path} has snapshot version {version}, "
                                 f"expected {SNAPSHOT_VERSION}")
    expect = _HEADER.size + 4 * n_x * n_p * 8
    if len(blob) != expect:
        raise ConfigurationError(f"{path} holds {len(blob)} bytes, expected "
                                 f"{expect}")
    grid = PhaseGrid(n_x=n_x, n_p=n_p, x0=x0, lx=lx, p0=p0, lp=lp)
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(
        float).reshape(4, n_x, n_p)
    return WignerState(grid, data, hbar, time=time)


def write_state_csv(path, state: WignerState) -> Path:
    """Text dump (x, p, f0..f3), one row per node; small grids only."""
    g = state.grid
    if g.n_x * g.n_p > STATE_CSV_MAX_NODES:
        raise ConfigurationError(
            f"grid has {g.n_x * g.n_p} nodes; CSV state dumps stop at "
            f"{STATE_CSV_MAX_NODES}, use the binary snapshot instead")
    xx = np.repeat(g.x, g.n_p)
    pp = np.tile(g.p, g.n_x)
    rows = np.column_stack([xx, pp] +
                           [state.data[c].reshape(-1) for c in range(4)])
    return write_csv(path, ["x", "p", "f0", "f1", "f2", "f3"], rows)
