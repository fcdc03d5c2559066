"""On-disk formats: binary field snapshots and per-attempt CSV time series.

Snapshot layout (little-endian)::

    b"OKF1" | u32 version=1 | u32 dims | u32 nodes[dims] | f64 time | f64 values[prod(nodes)]
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .driver import StepRecord

MAGIC = b"OKF1"
VERSION = 1
COLUMNS = [f.name for f in fields(StepRecord)]


class FormatError(ValueError):
    pass


def write_snapshot(phi: np.ndarray, time: float, path: str | Path) -> None:
    phi = np.ascontiguousarray(phi, dtype="<f8")
    header = MAGIC + struct.pack(f"<II{phi.ndim}I", VERSION, phi.ndim, *phi.shape) + struct.pack("<d", time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(phi.tobytes(order="C"))


def read_snapshot(path: str | Path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: not a snapshot file (bad magic {data[:4]!r})")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    version, dims = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported snapshot version {version}")
    if dims not in (2, 3):
        raise FormatError(f"{path}: invalid dimension count {dims}")
    offset = 12 + 4 * dims
    if len(data) < offset + 8:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{dims}I", data, 12)
    (time,) = struct.unpack_from("<d", data, offset)
    offset += 8
    expected = offset + 8 * math.prod(shape)
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} does not match header (expected {expected})")
    values = np.frombuffer(data, dtype="<f8", offset=offset).reshape(shape).astype(float)
    return values, time


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return f"{value:.17g}"


class TimeSeriesWriter:
    """Streams :class:`StepRecord` rows to a CSV file as the run proceeds."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(COLUMNS) + "\n")

    def __call__(self, rec: StepRecord) -> None:
        self._fh.write(",".join(format_value(getattr(rec, c)) for c in COLUMNS) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_timeseries(records: Iterable[StepRecord], path: str | Path) -> None:
    with TimeSeriesWriter(path) as writer:
        for rec in records:
            writer(rec)


def read_timeseries(path: str | Path) -> list[StepRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != COLUMNS:
            raise FormatError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            kw = {}
            for name, text in zip(COLUMNS, row):
                if name in ("step_index", "attempt_index", "newton_iters", "linear_iters"):
                    kw[name] = int(text)
                elif name == "accepted":
                    kw[name] = text == "1"
                else:
                    kw[name] = float(text)
            out.append(StepRecord(**kw))
    return out
