"""Artifact readers and writers.

CSV files carry a one-line header and one row per sample. Time columns use
nine decimal places; every other value is written with 17 significant digits
so that a round trip through :func:`read_csv` is lossless. JSON is written
with sorted keys and a trailing newline. Every writer replaces its target
atomically through a temporary file in the same directory.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

TIME_COLUMNS = ("t",)


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(value: float, is_time: bool) -> str:
    if is_time:
        return f"{value:.9f}"
    if math.isnan(value):
        return "nan"
    return "%.16e" % value


def format_csv(columns: dict) -> str:
    """CSV text for equal-length columns; keys give the header order."""
    names = list(columns)
    if not names:
        raise ValueError("no columns")
    arrays = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("columns differ in length")
    time_flags = [k in TIME_COLUMNS for k in names]
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_fmt(float(a[i]), f) for a, f in zip(arrays, time_flags)))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict) -> Path:
    return atomic_write_text(path, format_csv(columns))


def read_csv(path) -> dict:
    """Columns of a CSV written by :func:`write_csv`, as float arrays."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    names = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != len(names) for r in rows):
        raise ValueError(f"{path}: ragged CSV")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(names))
    return {k: data[:, j].copy() for j, k in enumerate(names)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no NaN or infinity; absent values become null
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def format_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, format_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# typed exports


def sequence_columns(x, ts: float) -> dict:
    x = np.asarray(x, dtype=float)
    return {"t": np.arange(x.size) * ts, "value": x}


def spectral_columns(spec) -> dict:
    return {
        "f_hz": spec.grid,
        "phi_uu": spec.Phi_uu,
        "re_phi_yu": spec.Phi_yu.real,
        "im_phi_yu": spec.Phi_yu.imag,
    }


def response_columns(resp) -> dict:
    v = np.asarray(resp.value)
    return {"f_hz": resp.grid, "re": v.real, "im": v.imag}


def response_from_columns(cols: dict):
    from .dsp import FrequencyResponse

    return FrequencyResponse(cols["f_hz"], cols["re"] + 1j * cols["im"])


def trace_columns(trace) -> dict:
    return {
        "t": trace.t,
        "r": trace.r,
        "dy_meas": trace.dy_meas,
        "g_m": trace.g_m,
        "g_m_prime": trace.g_m_prime,
        "drive": trace.drive,
        "sat_flag": trace.sat_flag,
        "z_hat": trace.z_hat,
    }
