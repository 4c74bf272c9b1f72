"""Deterministic CSV and text writers (17 significant digits, LF endings)."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .grid import Grid


def fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.17g}"


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_grid_field(path, field: np.ndarray, grid: Grid) -> Path:
    """One row per x node: ``x`` then the values at every t level."""
    field = np.asarray(field, dtype=float)
    if field.shape != grid.shape:
        raise ValueError(f"field shape {field.shape} does not match grid {grid.shape}")
    header = ["x"] + [f"t={fmt(t)}" for t in grid.t]
    rows = [[x, *field[i]] for i, x in enumerate(grid.x)]
    return write_rows(path, header, rows)


def read_grid_field(path):
    """Inverse of write_grid_field: returns (x, t, values)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    t = np.array([float(h[2:]) for h in header[1:]])
    return body[:, 0], t, body[:, 1:]


def write_text(path, text: str) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")
    return path
