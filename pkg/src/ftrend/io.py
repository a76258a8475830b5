"""CSV and JSON exchange formats.

Curve files: the first row holds the grid points, every following row one
curve evaluated on that grid.  Edge files: one 1-based vertex pair per row,
optionally preceded by a header row.  All writers replace the target
atomically (temporary file in the same directory, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ftrend.diffops import Graph
from ftrend.fda import FunctionalDataset, Grid


class InputError(ValueError):
    """Malformed or missing input file."""


def _rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def _floats(path, lineno, row):
    try:
        vals = np.array([float(c) for c in row])
    except ValueError as exc:
        raise InputError(f"{path}:{lineno}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise InputError(f"{path}:{lineno}: non-finite value")
    return vals


def read_curves(path) -> FunctionalDataset:
    rows = list(_rows(path))
    if not rows:
        raise InputError(f"{path}: empty file")
    lineno, head = rows[0]
    points = _floats(path, lineno, head)
    values = []
    for lineno, row in rows[1:]:
        if len(row) != points.size:
            raise InputError(f"{path}:{lineno}: expected {points.size} values, found {len(row)}")
        values.append(_floats(path, lineno, row))
    if len(values) < 2:
        raise InputError(f"{path}: need at least two curves, found {len(values)}")
    try:
        grid = Grid(points)
        return FunctionalDataset(grid, np.vstack(values))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def read_edges(path, n: int) -> Graph:
    """Edge list with 1-based vertices for a graph on ``n`` vertices."""
    edges = []
    seen = {}
    for idx, (lineno, row) in enumerate(_rows(path)):
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected two vertex indices, found {len(row)} fields")
        try:
            i, j = int(row[0]), int(row[1])
        except ValueError:
            if idx == 0:
                continue  # header
            raise InputError(f"{path}:{lineno}: vertex indices must be integers") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise InputError(f"{path}:{lineno}: vertex out of range 1..{n}")
        if i == j:
            raise InputError(f"{path}:{lineno}: self-loop at vertex {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise InputError(f"{path}:{lineno}: duplicate of the edge on line {seen[key]}")
        seen[key] = lineno
        edges.append((i - 1, j - 1))
    try:
        return Graph(n, edges)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_csv(rows, header=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in header])
    for r in np.atleast_2d(rows):
        w.writerow([repr(float(v) + 0.0) for v in r])
    return buf.getvalue()


def write_curves(path, data: FunctionalDataset) -> None:
    write_text(path, matrix_csv(data.values, header=data.grid.points))


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")
