"""Scattered concentration observations and their CSV/JSON files."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hiddenflow.errors import FormatError


@dataclass
class SampledDataset:
    """Observation records ``(t, x, y[, z], c)`` plus optional collocation points.

    ``points`` has shape (N, dim+1) with time in column 0.  ``collocation``,
    when present, holds residual-only points of the same layout.
    """

    points: np.ndarray
    c: np.ndarray
    collocation: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.points.shape[0] < 1:
            raise ValueError("a dataset needs at least one record")
        if self.points.shape[1] not in (3, 4):
            raise ValueError("records must be (t, x, y) or (t, x, y, z)")
        if self.c.shape[0] != self.points.shape[0]:
            raise ValueError("one concentration value per record is required")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.c))):
            raise ValueError("dataset contains non-finite values")
        if self.collocation is not None:
            self.collocation = np.atleast_2d(np.asarray(self.collocation, dtype=float))
            if self.collocation.shape[1] != self.points.shape[1]:
                raise ValueError("collocation points must match the record layout")
            if not np.all(np.isfinite(self.collocation)):
                raise ValueError("collocation points contain non-finite values")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1] - 1

    @property
    def d(self) -> np.ndarray:
        return 1.0 - self.c

    def bounding_points(self) -> np.ndarray:
        if self.collocation is None:
            return self.points
        return np.vstack([self.points, self.collocation])


def _header(dim: int, with_c: bool) -> list[str]:
    cols = ["t", "x", "y"] + (["z"] if dim == 3 else [])
    return cols + (["c"] if with_c else [])


def _write_rows(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _read_rows(path: Path, allowed: list[list[str]]) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty file", path, 1) from None
        if header not in allowed:
            raise FormatError(
                f"unexpected header {','.join(header)!r}; expected one of "
                + " or ".join(repr(",".join(a)) for a in allowed),
                path, 1,
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise FormatError(f"expected {len(header)} fields, found {len(rec)}", path, lineno)
            try:
                rows.append([float(f) for f in rec])
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", path, lineno) from None
    if not rows:
        raise FormatError("file holds no records", path)
    return header, np.array(rows, dtype=float)


def metadata_path(path) -> Path:
    return Path(path).with_suffix(".json")


def export_dataset(dataset: SampledDataset, path, collocation_path=None) -> None:
    """Write ``t,x,y[,z],c`` rows with 17 significant digits.

    Metadata, when present, goes to a JSON file next to the CSV.
    """
    path = Path(path)
    rows = np.column_stack([dataset.points, dataset.c])
    _write_rows(path, _header(dataset.dim, True), rows)
    if dataset.metadata:
        metadata_path(path).write_text(json.dumps(dataset.metadata, indent=2, sort_keys=True))
    if dataset.collocation is not None:
        if collocation_path is None:
            raise ValueError("dataset has collocation points but no collocation path was given")
        export_collocation(dataset.collocation, collocation_path)


def export_collocation(points: np.ndarray, path) -> None:
    points = np.atleast_2d(points)
    _write_rows(Path(path), _header(points.shape[1] - 1, False), points)


def import_collocation(path) -> np.ndarray:
    _, rows = _read_rows(path, [_header(2, False), _header(3, False)])
    return rows


def import_dataset(path, collocation_path=None) -> SampledDataset:
    path = Path(path)
    header, rows = _read_rows(path, [_header(2, True), _header(3, True)])
    meta = {}
    mpath = metadata_path(path)
    if mpath.exists():
        try:
            meta = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad metadata JSON: {exc.msg}", mpath, exc.lineno) from None
    colloc = import_collocation(collocation_path) if collocation_path is not None else None
    try:
        return SampledDataset(rows[:, :-1], rows[:, -1], colloc, meta)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
