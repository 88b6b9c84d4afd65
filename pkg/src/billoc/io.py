"""Artifact formats: CSV tables, flat binaries with JSON headers, JSON and JSON-lines.

All writers are deterministic: floats are written with ``repr`` precision,
JSON keys are sorted and binaries are little-endian.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classical import ChaoticGrid, PhasePoint
from .errors import MissingArtifact
from .husimi import HusimiGrid
from .quantum import NORMALIZATION_TAG, EigenstateRecord


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _clean(obj):
    """Convert numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path: Path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(str(path))
    return json.loads(path.read_text())


def write_jsonl(path: Path, rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(_clean(row), sort_keys=True) + "\n")
    return path


def read_jsonl(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(str(path))
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(str(path))
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def read_column(path: Path) -> np.ndarray:
    """Single-column numeric CSV, with or without a header line."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(str(path))
    vals = []
    for line in path.read_text().splitlines():
        line = line.strip().split(",")[0]
        if not line:
            continue
        try:
            vals.append(float(line))
        except ValueError:
            if vals:
                raise
    return np.asarray(vals)


def _write_binary(path: Path, arr: np.ndarray, header: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(arr)
    path.write_bytes(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    write_json(path.with_suffix(".json"), header)
    return path


def _read_binary(path: Path, dtype: str):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(str(path))
    header = read_json(path.with_suffix(".json"))
    return np.frombuffer(path.read_bytes(), dtype=dtype).copy(), header


# ------------------------------------------------------------ chaotic grid

def write_chaotic_grid(path: Path, grid: ChaoticGrid) -> Path:
    header = {
        "dims": list(grid.dims),
        "lambda": grid.lam,
        "L": grid.perimeter,
        "seed": grid.seed,
        "n_collisions": grid.n_collisions,
        "start": [grid.start.s, grid.start.p],
        "chi_c": grid.chi_c,
        "dtype": "int8",
    }
    return _write_binary(path, grid.grid.astype(np.int8), header)


def read_chaotic_grid(path: Path) -> ChaoticGrid:
    flat, h = _read_binary(path, "<i1")
    grid = flat.reshape(h["dims"]).astype(np.int8)
    return ChaoticGrid(grid, h["lambda"], h["L"], h["seed"], h["n_collisions"], PhasePoint(*h["start"]))


# ------------------------------------------------------- boundary functions

def write_boundary_functions(path: Path, records: Sequence[EigenstateRecord]) -> Path:
    """All boundary functions of one window, concatenated, with a per-state header."""
    if records:
        data = np.concatenate([r.u_samples for r in records])
    else:
        data = np.empty(0)
    header = {
        "normalization": NORMALIZATION_TAG,
        "dtype": "float64",
        "states": [
            {"k": r.k, "N_b": r.boundary_grid_size, "L": r.perimeter, "lambda": r.lam,
             "parity": r.parity, "window_id": r.window_id}
            for r in records
        ],
    }
    return _write_binary(path, data.astype(np.float64), header)


def read_boundary_functions(path: Path) -> list[EigenstateRecord]:
    flat, h = _read_binary(path, "<f8")
    out = []
    pos = 0
    for st in h["states"]:
        n = st["N_b"]
        out.append(EigenstateRecord(st["k"], flat[pos:pos + n], st["lambda"], st["L"], st["parity"], st["window_id"]))
        pos += n
    return out


# -------------------------------------------------------------- Husimi grid

def write_husimi(path: Path, H: HusimiGrid) -> Path:
    header = {"k": H.k, "dims": list(H.dims), "lambda": H.lam, "L": H.perimeter,
              "normalized": H.normalized, "dtype": "float64"}
    return _write_binary(path, H.values.astype(np.float64), header)


def read_husimi(path: Path) -> HusimiGrid:
    flat, h = _read_binary(path, "<f8")
    return HusimiGrid(flat.reshape(h["dims"]), h["k"], h["lambda"], h["L"], h["normalized"])


# ------------------------------------------------------------------ spectra

def write_spectrum(path: Path, records: Sequence[EigenstateRecord]) -> Path:
    return write_csv(path, ["k", "window_id", "parity"], ((r.k, r.window_id, r.parity) for r in records))


def read_spectrum(path: Path) -> np.ndarray:
    return np.array([float(r["k"]) for r in read_csv(path)])
