"""Trace files: the ``DLK1`` binary format and a ``t,value`` CSV.

Binary layout (all little-endian)::

    b"DLK1" | sample_rate f64 | count u64 | count x f64 samples
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .core import TimeSeries

MAGIC = b"DLK1"
_HEADER = struct.Struct("<4sdQ")


class TraceFormatError(ValueError):
    pass


def write_bin(ts: TimeSeries, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, float(ts.sample_rate), len(ts)))
        fh.write(np.ascontiguousarray(ts.samples, dtype="<f8").tobytes())


def read_bin(path) -> TimeSeries:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TraceFormatError("truncated header")
        magic, fs, n = _HEADER.unpack(head)
        if magic != MAGIC:
            raise TraceFormatError(f"bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n:
        raise TraceFormatError(f"header says {n} samples, file holds {data.size}")
    return TimeSeries(0.0, 1.0 / fs, data.astype(np.float64))


def write_csv(ts: TimeSeries, path) -> None:
    # t is derived from the sample index, value uses repr (shortest round-trip form)
    with open(path, "w", newline="") as fh:
        fh.write("t,value\n")
        t0, dt = ts.t_start, ts.dt
        fh.writelines(f"{t0 + k * dt!r},{v!r}\n" for k, v in enumerate(ts.samples.tolist()))


def read_csv(path) -> TimeSeries:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if head != ["t", "value"]:
            raise TraceFormatError("expected header 't,value'")
        rows = [(float(a), float(b)) for a, b in r]
    if len(rows) < 2:
        raise TraceFormatError("need at least two samples")
    t = np.array([a for a, _ in rows])
    dt = float((t[-1] - t[0]) / (t.size - 1))
    return TimeSeries(t[0], dt, np.array([b for _, b in rows]))


def read_trace(path) -> TimeSeries:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_bin(path) if magic == MAGIC else read_csv(path)


def write_trace(ts: TimeSeries, path, fmt: str = "bin") -> None:
    if fmt == "bin":
        write_bin(ts, path)
    elif fmt == "csv":
        write_csv(ts, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
