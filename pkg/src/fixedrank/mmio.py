"""Strict MatrixMarket reading and writing.

Supports exactly the two shapes the CLI needs: ``array real general`` for
dense matrices and ``coordinate real general`` for observed-entry triples.
The parser is deliberately strict: unknown qualifiers, malformed counts,
out-of-range or duplicate coordinates all raise MatrixMarketError carrying
the 1-based line number. (scipy's reader exists but silently sums duplicate
entries and reports no line numbers, which the error contract here needs.)
"""

from __future__ import annotations

import numpy as np

from .exceptions import MatrixMarketError
from .objectives import MaskedCompletion

__all__ = [
    "load_matrixmarket",
    "read_dense",
    "read_coordinate",
    "write_dense",
    "write_coordinate",
]

HEADER_PREFIX = "%%MatrixMarket"


def _parse_header(line: str) -> str:
    tokens = line.strip().split()
    if not tokens or tokens[0] != HEADER_PREFIX:
        raise MatrixMarketError(
            f"first line must start with {HEADER_PREFIX!r}", line=1
        )
    if len(tokens) != 5:
        raise MatrixMarketError(
            "header must read '%%MatrixMarket matrix <format> real general'",
            line=1,
        )
    _, obj, fmt, field, symmetry = tokens
    if obj.lower() != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", line=1)
    if fmt.lower() not in ("array", "coordinate"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", line=1)
    if field.lower() != "real":
        raise MatrixMarketError(f"unsupported field {field!r} (only real)", line=1)
    if symmetry.lower() != "general":
        raise MatrixMarketError(
            f"unsupported symmetry {symmetry!r} (only general)", line=1
        )
    return fmt.lower()


def _content_lines(lines):
    """Yield (1-based line number, stripped text) skipping comments/blanks
    after the header line."""
    for number, raw in enumerate(lines[1:], start=2):
        text = raw.strip()
        if not text or text.startswith("%"):
            continue
        yield number, text


def _parse_int(token: str, line: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise MatrixMarketError(f"bad {what} {token!r}", line=line) from None
    return value


def _parse_real(token: str, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MatrixMarketError(f"bad real value {token!r}", line=line) from None
    if not np.isfinite(value):
        raise MatrixMarketError(f"non-finite value {token!r}", line=line)
    return value


def _read_lines(path) -> list[str]:
    with open(path, "r", encoding="ascii") as handle:
        return handle.readlines()


def load_matrixmarket(path):
    """Read a MatrixMarket file; dense ndarray for the array format, a
    MaskedCompletion objective for the coordinate format."""
    lines = _read_lines(path)
    if not lines:
        raise MatrixMarketError("empty file", line=1)
    fmt = _parse_header(lines[0])
    if fmt == "array":
        return _parse_array(lines)
    return _parse_coordinate_objective(lines)


def read_dense(path) -> np.ndarray:
    """Read an array-format file; rejects coordinate files."""
    lines = _read_lines(path)
    if not lines:
        raise MatrixMarketError("empty file", line=1)
    if _parse_header(lines[0]) != "array":
        raise MatrixMarketError("expected array format", line=1)
    return _parse_array(lines)


def read_coordinate(path):
    """Read a coordinate-format file into (rows, cols, values, shape) with
    0-based sorted-by-nothing arrays; rejects array files."""
    lines = _read_lines(path)
    if not lines:
        raise MatrixMarketError("empty file", line=1)
    if _parse_header(lines[0]) != "coordinate":
        raise MatrixMarketError("expected coordinate format", line=1)
    return _parse_coordinate(lines)


def _parse_array(lines) -> np.ndarray:
    content = _content_lines(lines)
    try:
        size_line, size_text = next(content)
    except StopIteration:
        raise MatrixMarketError("missing size line", line=len(lines)) from None
    tokens = size_text.split()
    if len(tokens) != 2:
        raise MatrixMarketError("array size line must be 'm n'", line=size_line)
    m = _parse_int(tokens[0], size_line, "row count")
    n = _parse_int(tokens[1], size_line, "column count")
    if m < 1 or n < 1:
        raise MatrixMarketError("dimensions must be positive", line=size_line)

    values = np.empty(m * n)
    count = 0
    last_line = size_line
    for number, text in content:
        last_line = number
        tokens = text.split()
        if len(tokens) != 1:
            raise MatrixMarketError(
                "array entries must be one value per line", line=number
            )
        if count >= m * n:
            raise MatrixMarketError(
                f"more than {m * n} entries for a {m}x{n} array", line=number
            )
        values[count] = _parse_real(tokens[0], number)
        count += 1
    if count != m * n:
        raise MatrixMarketError(
            f"expected {m * n} entries, found {count}", line=last_line
        )
    # array format stores column-major
    return values.reshape((n, m)).T.copy()


def _parse_coordinate(lines):
    content = _content_lines(lines)
    try:
        size_line, size_text = next(content)
    except StopIteration:
        raise MatrixMarketError("missing size line", line=len(lines)) from None
    tokens = size_text.split()
    if len(tokens) != 3:
        raise MatrixMarketError(
            "coordinate size line must be 'm n nnz'", line=size_line
        )
    m = _parse_int(tokens[0], size_line, "row count")
    n = _parse_int(tokens[1], size_line, "column count")
    nnz = _parse_int(tokens[2], size_line, "entry count")
    if m < 1 or n < 1:
        raise MatrixMarketError("dimensions must be positive", line=size_line)
    if nnz < 0:
        raise MatrixMarketError("entry count must be nonnegative", line=size_line)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz)
    seen: dict[tuple[int, int], int] = {}
    count = 0
    last_line = size_line
    for number, text in content:
        last_line = number
        tokens = text.split()
        if len(tokens) != 3:
            raise MatrixMarketError(
                "coordinate entries must be 'i j value'", line=number
            )
        if count >= nnz:
            raise MatrixMarketError(
                f"more than the declared {nnz} entries", line=number
            )
        i = _parse_int(tokens[0], number, "row index")
        j = _parse_int(tokens[1], number, "column index")
        if not (1 <= i <= m and 1 <= j <= n):
            raise MatrixMarketError(
                f"index ({i}, {j}) outside 1..{m} x 1..{n}", line=number
            )
        if (i, j) in seen:
            raise MatrixMarketError(
                f"duplicate entry ({i}, {j}), first seen on line {seen[i, j]}",
                line=number,
            )
        seen[i, j] = number
        rows[count] = i - 1
        cols[count] = j - 1
        values[count] = _parse_real(tokens[2], number)
        count += 1
    if count != nnz:
        raise MatrixMarketError(
            f"expected {nnz} entries, found {count}", line=last_line
        )
    return rows, cols, values, (m, n)


def _parse_coordinate_objective(lines) -> MaskedCompletion:
    rows, cols, values, shape = _parse_coordinate(lines)
    try:
        return MaskedCompletion(rows, cols, values, shape)
    except ValueError as err:
        raise MatrixMarketError(str(err), line=len(lines)) from None


def write_dense(path, matrix) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("need a nonempty 2-d matrix")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix entries must be finite")
    m, n = matrix.shape
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"{HEADER_PREFIX} matrix array real general\n")
        handle.write(f"{m} {n}\n")
        for j in range(n):
            for i in range(m):
                handle.write(f"{float(matrix[i, j])!r}\n")


def write_coordinate(path, rows, cols, values, shape) -> None:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    m, n = int(shape[0]), int(shape[1])
    if rows.shape != cols.shape or rows.shape != values.shape or rows.ndim != 1:
        raise ValueError("rows, cols, values must be equal-length 1-d arrays")
    if rows.size and (
        rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n
    ):
        raise ValueError("coordinates out of range")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"{HEADER_PREFIX} matrix coordinate real general\n")
        handle.write(f"{m} {n} {rows.size}\n")
        for i, j, value in zip(rows, cols, values):
            handle.write(f"{i + 1} {j + 1} {float(value)!r}\n")
