"""CSV ingestion and emission for labeled point sets and distance matrices."""

from __future__ import annotations

import csv
import math

import numpy as np

from .errors import InputFormatError, InvalidClassCount
from .estimator import LabeledDataset
from .graph import DISTANCE_ATOL, PointSet

LABEL_COLUMN = "label"


def _parse_labels(raw: list[str]) -> list:
    try:
        return [int(v) for v in raw]
    except ValueError:
        return raw


def _make_dataset(points: PointSet, raw: list[str]) -> LabeledDataset:
    labels = _parse_labels(raw)
    if len(set(labels)) < 2:
        only = labels[0] if labels else None
        raise InvalidClassCount(f"need at least 2 classes, every row has label {only!r}")
    return LabeledDataset.from_raw(points, labels)


def ingest_points_csv(path: str) -> LabeledDataset:
    """Read a CSV with a header, a ``label`` column and numeric coordinates.

    Row numbers in error messages count data rows from 1 (the header is
    row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputFormatError(f"{path}: empty file") from None
        if LABEL_COLUMN not in header:
            raise InputFormatError(f"{path}: no {LABEL_COLUMN!r} column in header {header}")
        li = header.index(LABEL_COLUMN)
        if len(header) < 2:
            raise InputFormatError(f"{path}: no coordinate columns")
        raw, coords = [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputFormatError(f"{path}: row {row_no} has {len(row)} fields, header has {len(header)}")
            vals = []
            for j, cell in enumerate(row):
                if j == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise InputFormatError(f"{path}: row {row_no}, column {header[j]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise InputFormatError(f"{path}: row {row_no}, column {header[j]!r}: non-finite value {cell!r}")
                vals.append(v)
            raw.append(row[li].strip())
            coords.append(vals)
    if not coords:
        raise InputFormatError(f"{path}: no data rows")
    return _make_dataset(PointSet.euclidean(np.array(coords)), raw)


def _read_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise InputFormatError(f"{path}: row {row_no} is not numeric") from None
    if not rows:
        raise InputFormatError(f"{path}: empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise InputFormatError(f"{path}: ragged rows")
    return np.array(rows)


def _read_labels(path: str) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        vals = [row[0].strip() for row in csv.reader(fh) if row and row[0].strip()]
    if vals and vals[0] == LABEL_COLUMN:
        vals = vals[1:]
    return vals


def ingest_distance_csv(matrix_path: str, labels_path: str, atol: float = DISTANCE_ATOL) -> LabeledDataset:
    """Read an ``n x n`` distance matrix (no header) and a labels file.

    The labels file has one label per line and an optional ``label`` header.
    """
    dist = _read_matrix(matrix_path)
    raw = _read_labels(labels_path)
    if len(raw) != dist.shape[0]:
        raise InputFormatError(f"{labels_path}: {len(raw)} labels for a {dist.shape[0]}-row distance matrix")
    return _make_dataset(PointSet.from_distances(dist, atol), raw)


def emit_points_csv(data: LabeledDataset, path: str) -> None:
    if not data.points.is_euclidean:
        raise InputFormatError("dataset holds a distance matrix; use emit_distance_csv")
    x = data.points.coords
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([LABEL_COLUMN] + [f"x{j + 1}" for j in range(x.shape[1])])
        for code, row in zip(data.labels, x):
            w.writerow([data.classes[code]] + [repr(float(v)) for v in row])


def emit_distance_csv(data: LabeledDataset, matrix_path: str, labels_path: str) -> None:
    dist = data.points.dense_distances()
    with open(matrix_path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in dist])
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([LABEL_COLUMN])
        w.writerows([[data.classes[c]] for c in data.labels])
