"""System files (JSON) and trace/plot data (CSV).

A system file is a JSON object with keys ``"A"``, ``"B"``, ``"C"``, ``"D"``
holding row-major nested lists of finite numbers, plus an optional
``"name"``. Floats are written with Python's shortest round-trip repr, so
reading back reproduces the matrices bit for bit. All writers replace the
target atomically (temporary file + rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .lti import StateSpace

__all__ = [
    "SystemFileError",
    "system_to_dict",
    "system_from_dict",
    "read_system",
    "write_system",
    "write_json",
    "write_csv",
    "atomic_write_text",
]


class SystemFileError(ValueError):
    """Malformed system file; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """Make numpy values JSON-safe; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    atomic_write_text(path, json.dumps(_clean(obj), indent=2) + "\n")


def system_to_dict(sys: StateSpace, name=None) -> dict:
    d = {key: getattr(sys, key).tolist() for key in "ABCD"}
    if name is not None:
        d["name"] = name
    return d


def _matrix(doc, key):
    if key not in doc:
        raise SystemFileError(f"missing key {key!r}", key)
    value = doc[key]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [[value]]
    if not isinstance(value, list):
        raise SystemFileError(f"{key!r} must be a nested list of numbers", key)
    rows = value
    if rows and not all(isinstance(r, list) for r in rows):
        raise SystemFileError(f"{key!r} must be a list of rows", key)
    for r in rows:
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise SystemFileError(f"{key!r} contains a non-numeric entry: {x!r}", key)
            if not math.isfinite(x):
                raise SystemFileError(f"{key!r} contains a non-finite entry", key)
    if len({len(r) for r in rows}) > 1:
        raise SystemFileError(f"{key!r} has ragged rows", key)
    return np.array(rows, dtype=float).reshape(len(rows), len(rows[0]) if rows else 0)


def system_from_dict(doc) -> StateSpace:
    if not isinstance(doc, dict):
        raise SystemFileError("system file must contain a JSON object")
    mats = {key: _matrix(doc, key) for key in "ABCD"}
    n = mats["A"].shape[0]
    m = mats["D"].shape[0] if mats["D"].ndim == 2 else 0
    expected = {"A": (n, n), "B": (n, m), "C": (m, n), "D": (m, m)}
    for key in "DABC":
        shape = mats[key].shape
        if n == 0 and key in "BC":
            continue
        if shape != expected[key]:
            raise SystemFileError(f"{key!r} has shape {shape[0]}x{shape[1]}, expected "
                                  f"{expected[key][0]}x{expected[key][1]}", key)
    try:
        return StateSpace(mats["A"], mats["B"], mats["C"], mats["D"])
    except ValueError as exc:
        raise SystemFileError(str(exc)) from exc


def read_system(path) -> StateSpace:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemFileError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFileError(f"{path} is not valid JSON: {exc}") from exc
    return system_from_dict(doc)


def write_system(path, sys: StateSpace, name=None):
    write_json(path, system_to_dict(sys, name))


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    atomic_write_text(path, buf.getvalue())
