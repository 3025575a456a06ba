"""
Channel-matrix persistence: the CSV exchange format and a PGM heatmap.

CSV layout: a `secret,time_cycles,count` header, then one row per non-empty
cell sorted by secret then time, LF line endings, decimal integers only.
"""

import csv
import io
import re
from typing import List, Tuple

import numpy as np

from tcsim.chanbench import ChannelMatrix
from tcsim.errors import MatrixFormatError

CSV_HEADER = ("secret", "time_cycles", "count")
_DECIMAL = re.compile(r"^[0-9]+$")


def matrix_to_csv(matrix: ChannelMatrix) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in matrix.rows():
        writer.writerow(row)
    return buffer.getvalue()


def matrix_from_csv(text: str) -> ChannelMatrix:
    """
    Parse the CSV exchange format.

    Args:
        text: Whole file contents

    Returns:
        ChannelMatrix whose secret count is the largest secret + 1

    Raises:
        MatrixFormatError: On a bad header, a malformed row or no rows,
            carrying the 1-based line number
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != ",".join(CSV_HEADER):
        raise MatrixFormatError(f"expected header {','.join(CSV_HEADER)!r}", line=1)

    rows: List[Tuple[int, int, int]] = []
    for number, fields in enumerate(csv.reader(lines[1:]), start=2):
        if not fields:
            continue
        if len(fields) != len(CSV_HEADER):
            raise MatrixFormatError(f"expected 3 fields, got {len(fields)}", line=number)
        cleaned = [field.strip() for field in fields]
        for name, value in zip(CSV_HEADER, cleaned):
            if not _DECIMAL.match(value):
                raise MatrixFormatError(
                    f"{name} must be a non-negative integer, got {value!r}", line=number
                )
        secret, time, count = (int(value) for value in cleaned)
        if time <= 0:
            raise MatrixFormatError("time_cycles must be positive", line=number)
        rows.append((secret, time, count))

    if not rows:
        raise MatrixFormatError("matrix has no rows", line=len(lines))
    if sum(count for _, _, count in rows) == 0:
        raise MatrixFormatError("matrix holds no samples", line=len(lines))
    return ChannelMatrix.from_counts(rows)


def matrix_to_pgm(matrix: ChannelMatrix) -> bytes:
    """
    Render a binary greyscale (P5) heatmap.

    One pixel per (secret, time bin): x is the secret, y the time bin with row
    0 holding the smallest time. Intensity is count scaled to the matrix
    maximum.
    """
    peak = matrix.counts.max() if matrix.counts.size else 0
    if peak <= 0:
        raise MatrixFormatError("cannot render an empty matrix")
    pixels = np.rint(255.0 * matrix.counts.T / peak).astype(np.uint8)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + pixels.tobytes()
