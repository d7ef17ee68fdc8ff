"""Persistence: field snapshots, JSON reports, CSV tables and JSON-lines traces.

Snapshot format (``*.snap``), little-endian throughout:

1. the 8 magic bytes ``b"MLSNAP1\\n"``;
2. one UTF-8 JSON header line terminated by ``\\n`` with keys ``name``,
   ``spacing``, ``domain`` (kind, params, center), ``nodes`` (interior
   unknowns), ``cuts`` (boundary cut points) and ``columns``, a list of
   ``{"name", "dtype", "length"}``;
3. the raw column arrays, in header order, with no padding.

Columns are ``x``, ``y``, ``value`` (float64, nodes followed by cut points)
and ``boundary`` (uint8, 1 for cut points).  A field without a boundary
trace stores only its nodes.

The columnar text format (``*.txt``) has one ``# key = value`` comment
line per header item followed by whitespace-separated ``x y value boundary``
rows written with 17 significant digits.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["write_snapshot", "read_snapshot", "write_field_text", "read_field_text", "write_json", "write_csv", "write_jsonl", "to_jsonable"]

MAGIC = b"MLSNAP1\n"


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_jsonl(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(to_jsonable(r), sort_keys=True) + "\n")
    return path


def write_csv(path, rows, columns=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [to_jsonable(r) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r.get(k))
                        for k in columns})
    return path


def write_snapshot(path, field, name=None):
    """Write a :class:`~mongelab.discretization.ScalarField` in the snapshot format."""
    grid = field.grid
    pts, vals, flag = _columns(field)
    cols = [("x", pts[:, 0].astype("<f8")), ("y", pts[:, 1].astype("<f8")), ("value", vals.astype("<f8")),
            ("boundary", flag.astype("u1"))]
    d = grid.domain
    header = {
        "name": name or Path(path).stem,
        "spacing": grid.spacing,
        "domain": {"kind": d.kind, "params": dict(d.params), "center": list(d.center)},
        "nodes": int(grid.n),
        "cuts": int(grid.m if field.trace is not None else 0),
        "columns": [{"name": n, "dtype": a.dtype.str, "length": int(a.size)} for n, a in cols],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write((json.dumps(to_jsonable(header), sort_keys=True) + "\n").encode())
        for _, a in cols:
            fh.write(np.ascontiguousarray(a).tobytes())
    return path


def read_snapshot(path):
    """Return ``(header, columns)`` with ``columns`` a dict of numpy arrays."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ValueError(f"{path}: not a snapshot file")
    end = raw.index(b"\n", len(MAGIC))
    header = json.loads(raw[len(MAGIC):end].decode())
    pos = end + 1
    cols = {}
    for c in header["columns"]:
        dt = np.dtype(c["dtype"])
        nbytes = dt.itemsize * c["length"]
        cols[c["name"]] = np.frombuffer(raw[pos:pos + nbytes], dtype=dt).copy()
        pos += nbytes
    if pos != len(raw):
        raise ValueError(f"{path}: trailing bytes after the last column")
    return header, cols


def _columns(field):
    grid = field.grid
    pts, vals, flag = grid.points, field.values, np.zeros(grid.n, np.uint8)
    if field.trace is not None:
        pts = np.concatenate([pts, grid.bpoints])
        vals = np.concatenate([vals, field.trace])
        flag = np.concatenate([flag, np.ones(grid.m, np.uint8)])
    return pts, vals, flag


def write_field_text(path, field, name=None):
    """Write ``x y value boundary`` rows with a commented header."""
    pts, vals, flag = _columns(field)
    grid = field.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"# name = {name or path.stem}\n# spacing = {grid.spacing!r}\n# domain = {grid.domain.kind}\n")
        fh.write("# columns = x y value boundary\n")
        for (x, y), v, b in zip(pts, vals, flag):
            fh.write(f"{x:.17g} {y:.17g} {v:.17g} {int(b)}\n")
    return path


def read_field_text(path):
    """Return ``(header, columns)`` like :func:`read_snapshot`."""
    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            header[key.strip()] = val.strip()
        elif line.strip():
            rows.append(line.split())
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return header, {"x": arr[:, 0], "y": arr[:, 1], "value": arr[:, 2], "boundary": arr[:, 3].astype(np.uint8)}
