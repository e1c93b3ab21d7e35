"""File formats: CSV datasets, frame files (CSV or binary) and JSON artifacts."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyDataset
from .mechanism import OrthoFrame, ZeroFrame
from .spectral import Dataset, norm_bound_holds

FRAME_MAGIC = b"ORTHOFR1"
_HEADER = struct.Struct("<8sII")


def _parse_float(token: str, row: int, col: int) -> float:
    token = token.strip()
    # float() is locale-independent; reject comma decimals explicitly
    if "," in token:
        raise DataError(f"row {row}, column {col}: comma decimal separator is not supported")
    try:
        return float(token)
    except ValueError:
        raise DataError(f"row {row}, column {col}: cannot parse {token!r} as a number") from None


def read_dataset(path, header=None) -> Dataset:
    """Read a comma-separated numeric matrix, one sample per row.

    ``header=None`` auto-detects a header row (first row not fully numeric).
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if header is None and rows:
        try:
            [float(c) for c in rows[0]]
            header = False
        except ValueError:
            header = True
    if header:
        rows = rows[1:]
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: row {i + 1} has {len(r)} fields, expected {width}")
    values = np.array([[_parse_float(c, i + 1, j + 1) for j, c in enumerate(r)] for i, r in enumerate(rows)])
    return Dataset(values, norm_certified=norm_bound_holds(values))


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(matrix, dtype=float):
            w.writerow([repr(float(x)) for x in row])


def frame_matrix(frame) -> np.ndarray:
    if isinstance(frame, (OrthoFrame, ZeroFrame)):
        return frame.matrix
    return np.asarray(frame, dtype=float)


def write_frame(path, frame, fmt: str = "csv") -> None:
    m = frame_matrix(frame)
    if fmt == "csv":
        write_matrix_csv(path, m)
    elif fmt == "bin":
        p, k = m.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(FRAME_MAGIC, p, k))
            fh.write(np.asarray(m, dtype="<f8").tobytes(order="F"))
    else:
        raise ValueError(f"unknown frame format {fmt!r}")


def read_frame_bin(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, p, k = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise DataError(f"{path}: not a frame file")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != p * k:
        raise DataError(f"{path}: truncated frame file")
    return body.reshape((p, k), order="F").copy()


def read_frame_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")
