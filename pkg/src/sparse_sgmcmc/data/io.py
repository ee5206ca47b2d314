"""CSV matrices with a ``# rows cols name`` header, plus JSON manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    # repr round-trips exactly and is platform independent
    return repr(float(x))


def write_matrix(path, arr, name: str | None = None, stamp: str | None = None) -> Path:
    """Write ``arr`` as CSV; ``stamp`` becomes a second comment line."""
    path = Path(path)
    a = np.asarray(arr, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    name = name or path.stem
    lines = [f"# {a.shape[0]} {a.shape[1]} {name}"]
    if stamp:
        lines.append(f"# {stamp}")
    lines.extend(",".join(format_float(v) for v in row) for row in a)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) < 3 or header[0] != "#":
            raise ValueError(f"{path}: missing '# rows cols name' header")
        rows, cols = int(header[1]), int(header[2])
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if rows else np.zeros((0, cols))
    if data.shape != (rows, cols):
        raise ValueError(f"{path}: header says {rows}x{cols}, found {data.shape}")
    return data


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
