"""Matrix CSV files and flat key-value configuration files.

Matrices are stored with one row per grid point and one column per subject.
An optional header row labels the columns; a first header cell ``u`` marks a
leading column holding the grid.  Numbers are written with 17 significant
digits, which reproduces any double exactly on reading.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParseError

__all__ = [
    "MatrixData",
    "format_float",
    "load_matrix_csv",
    "write_matrix_csv",
    "parse_config_text",
    "load_config_file",
]

GRID_COLUMN = "u"


@dataclass
class MatrixData:
    """Contents of a matrix CSV file.

    `grid` is the ``u`` column when present, otherwise an equispaced grid on
    [0, 1] (``grid_given`` tells which).  `labels` is the header of the data
    columns or ``None``.
    """

    values: np.ndarray
    grid: np.ndarray
    labels: list | None
    grid_given: bool


def format_float(x):
    return f"{float(x):.17g}"


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_matrix_csv(path):
    """Read a rectangular numeric CSV file into a :class:`MatrixData`."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from None
    numbered = [(i + 1, row) for i, row in enumerate(rows) if any(c.strip() for c in row)]
    if not numbered:
        return MatrixData(np.zeros((0, 0)), np.zeros(0), None, False)

    labels = None
    first_line, first = numbered[0]
    first = [c.strip() for c in first]
    if not all(_is_number(c) for c in first):
        labels = first
        numbered = numbered[1:]
    has_grid = labels is not None and labels[0] == GRID_COLUMN
    width = len(labels) if labels is not None else len(numbered[0][1])

    body = np.empty((len(numbered), width))
    for r, (line, row) in enumerate(numbered):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=line, path=path)
        for c, cell in enumerate(row):
            try:
                body[r, c] = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell.strip()!r}", line=line, path=path) from None

    if has_grid:
        grid = body[:, 0].copy()
        values = body[:, 1:]
        labels = labels[1:]
        if grid.size and not np.all(np.isfinite(grid)):
            raise ParseError("grid column contains non-finite values", path=path)
        steps = np.diff(grid)
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0)) + 1
            raise ParseError("grid column is not strictly increasing", line=numbered[bad][0], path=path)
    else:
        values = body
        p = body.shape[0]
        grid = np.linspace(0.0, 1.0, p) if p > 1 else np.zeros(p)
    return MatrixData(np.ascontiguousarray(values), grid, labels, has_grid)


def write_matrix_csv(path, values, grid=None, labels=None):
    """Write `values` (rows are grid points) with an optional ``u`` column.

    A header row is written whenever `grid` or `labels` is supplied; missing
    labels default to ``v1, v2, ...``.  Returns the text written.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionError("values must be a 2-d matrix")
    nrow, ncol = values.shape
    if grid is not None:
        grid = np.asarray(grid, dtype=float).ravel()
        if grid.size != nrow:
            raise DimensionError(f"grid has {grid.size} points for {nrow} rows")
    if labels is not None:
        labels = [str(x) for x in labels]
        if len(labels) != ncol:
            raise DimensionError(f"{len(labels)} labels for {ncol} columns")
    elif grid is not None:
        labels = [f"v{j + 1}" for j in range(ncol)]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if labels is not None:
        writer.writerow(([GRID_COLUMN] if grid is not None else []) + labels)
    for i in range(nrow):
        cells = [format_float(v) for v in values[i]]
        if grid is not None:
            cells.insert(0, format_float(grid[i]))
        writer.writerow(cells)
    text = buf.getvalue()
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def parse_config_text(text, path=None):
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Keys may use dashes or underscores and are returned with underscores.
    Repeated keys are an error.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno, path=path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", line=lineno, path=path)
        key = key.replace("-", "_")
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno, path=path)
        out[key] = (value, lineno)
    return out


def load_config_file(path):
    """:func:`parse_config_text` applied to the contents of `path`."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc.strerror}", path=path) from None
    return parse_config_text(text, path=path)
