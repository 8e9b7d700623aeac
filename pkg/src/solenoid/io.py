"""Deterministic, atomic writers for JSON, CSV and 16-bit PGM heatmaps."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def _clean(obj):
    """Plain-JSON view: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def atomic_write(path: str | os.PathLike, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps(obj))


def write_csv(path, rows: list[dict], config: dict | None = None, columns=None) -> Path:
    """CSV with an optional leading '# config=' comment line holding the config."""
    buf = io.StringIO()
    if config is not None:
        buf.write("# config=" + json.dumps(_clean(config), sort_keys=True) + "\n")
    columns = columns or (list(rows[0].keys()) if rows else [])
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in columns})
    return atomic_write(path, buf.getvalue())


def _fmt(v):
    v = _clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_pgm(path, values: np.ndarray, comment: str | None = None) -> Path:
    """16-bit binary PGM; values scaled linearly so the maximum maps to 65535.

    Rows of the image are the second array axis reversed (y up), columns the first.
    """
    a = np.asarray(values, dtype=float)
    img = np.flipud(a.T)
    top = float(img.max()) if img.size else 0.0
    scaled = np.zeros_like(img) if top <= 0 else np.clip(img / top, 0, 1) * 65535.0
    data = np.rint(scaled).astype(">u2")
    header = "P5\n"
    if comment:
        header += "".join(f"# {ln}\n" for ln in comment.splitlines())
    header += f"{img.shape[1]} {img.shape[0]}\n65535\n"
    return atomic_write(path, header.encode("ascii") + data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end]
        pos = end + 1
        if not line.startswith(b"#"):
            fields.extend(line.split())
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw[pos:], dtype=">u2").reshape(h, w)
