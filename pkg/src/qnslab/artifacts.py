"""Deterministic run outputs: raw snapshots, JSON reports, NDJSON logs, CSV."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .spectral import Grid

ARTIFACT_VERSION = "qnslab-artifacts/1"


def _clean(obj: Any) -> Any:
    """Make an object JSON friendly: numpy scalars become floats, nan/inf become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2)


def config_hash(resolved: dict) -> str:
    blob = json.dumps(_clean(resolved), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_json(path, obj: dict, chash: str) -> Path:
    path = Path(path)
    body = dict(obj)
    body["artifact_version"] = ARTIFACT_VERSION
    body["config_hash"] = chash
    path.write_text(dumps(body) + "\n")
    return path


def write_ndjson(path, records: Iterable[dict], chash: str) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(json.dumps({"artifact_version": ARTIFACT_VERSION, "config_hash": chash}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
    return path


def csv_header(chash: str, columns: Sequence[str] = ()) -> list[str]:
    lines = [f"artifact_version: {ARTIFACT_VERSION}", f"config_hash: {chash}"]
    if columns:
        lines.append("columns: " + ",".join(["t", *columns]))
    return lines


def write_snapshot(stem, values: np.ndarray, grid: Grid, chash: str, name: str = "") -> tuple[Path, Path]:
    """Raw little-endian float64 dump plus a JSON sidecar describing it."""
    stem = Path(stem)
    data = np.ascontiguousarray(values, dtype="<f8")
    raw = stem.with_suffix(".f64")
    raw.write_bytes(data.tobytes())
    meta = {
        "name": name or stem.name,
        "shape": list(data.shape),
        "dtype": "float64",
        "endianness": "little",
        "grid": {"dim": grid.dim, "n": grid.n, "box_length": grid.box_length},
    }
    side = write_json(stem.with_suffix(".json"), meta, chash)
    return raw, side


def read_snapshot(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    side, raw = stem.with_suffix(".json"), stem.with_suffix(".f64")
    if not side.exists() or not raw.exists():
        raise ConfigError(f"snapshot {stem} not found (need {raw.name} and {side.name})")
    meta = json.loads(side.read_text())
    if meta.get("endianness") != "little" or meta.get("dtype") != "float64":
        raise ConfigError(f"snapshot {stem} has unsupported layout")
    data = np.frombuffer(raw.read_bytes(), dtype="<f8")
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise ConfigError(f"snapshot {stem} size does not match its sidecar shape {shape}")
    return data.reshape(shape).astype(float), meta
