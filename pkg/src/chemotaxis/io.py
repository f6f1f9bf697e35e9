"""CSV diagnostics and binary snapshots.

Snapshot layout (all little-endian)::

    b"CHTX1"                 5-byte magic
    uint32                   dim
    int64  x dim             cells per axis
    float64 x dim            box lengths
    float64                  time t
    float64 x N              u, row-major (N = product of cells)
    float64 x N              v, row-major
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .diagnostics import DiagRecord
from .model import Grid, State

MAGIC = b"CHTX1"


class SnapshotError(ValueError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % value


class CsvSink:
    """Streaming DiagRecord writer; use as a sink callable inside a ``with`` block."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._fh = None
        self._writer = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(DiagRecord.columns())
        return self

    def __call__(self, rec: DiagRecord) -> None:
        self._writer.writerow([_fmt(getattr(rec, c)) for c in DiagRecord.columns()])

    def __exit__(self, *exc):
        self._fh.close()
        return False


def write_csv(records: Iterable[DiagRecord], path: Path | str) -> None:
    with CsvSink(path) as sink:
        for rec in records:
            sink(rec)


def read_csv(path: Path | str) -> list[DiagRecord]:
    cols = DiagRecord.columns()
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != cols:
            raise ValueError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            vals = {}
            for name, text in zip(cols, row):
                if name == "step":
                    vals[name] = int(text)
                elif text == "":
                    vals[name] = None
                else:
                    vals[name] = float(text)
            out.append(DiagRecord(**vals))
    return out


def write_snapshot(state: State, grid: Grid, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = grid.dim
    header = MAGIC + struct.pack(f"<I{d}q{d}dd", d, *grid.cells, *grid.lengths, state.t)
    u = np.ascontiguousarray(state.u, dtype="<f8").reshape(grid.shape)
    v = np.ascontiguousarray(state.v, dtype="<f8").reshape(grid.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(u.tobytes(order="C"))
        fh.write(v.tobytes(order="C"))


def read_snapshot(path: Path | str, expected: Grid | None = None) -> tuple[State, Grid]:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise SnapshotError(f"{path}: not a CHTX1 snapshot")
    pos = 5
    if len(data) < pos + 4:
        raise SnapshotError(f"{path}: truncated header")
    (d,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if d not in (1, 2, 3):
        raise SnapshotError(f"{path}: bad dimension {d}")
    need = 8 * d + 8 * d + 8
    if len(data) < pos + need:
        raise SnapshotError(f"{path}: truncated header")
    vals = struct.unpack_from(f"<{d}q{d}dd", data, pos)
    pos += need
    cells = tuple(int(n) for n in vals[:d])
    lengths = tuple(float(x) for x in vals[d:2 * d])
    t = float(vals[2 * d])
    grid = Grid(lengths, cells)
    payload = len(data) - pos
    want = 2 * grid.size * 8
    if payload < want:
        raise SnapshotError(f"{path}: truncated payload ({payload} of {want} bytes)")
    if payload > want:
        raise SnapshotError(f"{path}: trailing bytes after payload ({payload - want})")
    if expected is not None and (expected.cells != grid.cells or expected.lengths != grid.lengths):
        raise SnapshotError(
            f"{path}: dimension mismatch, snapshot {cells}/{lengths} vs grid {expected.cells}/{expected.lengths}")
    arr = np.frombuffer(data, dtype="<f8", count=2 * grid.size, offset=pos).astype(float)
    u = arr[:grid.size].reshape(grid.shape).copy()
    v = arr[grid.size:].reshape(grid.shape).copy()
    return State(u, v, t), grid
