import struct

import numpy as np
import pytest

from dropsense import io, reference as ref
from dropsense.core import TimeSeries
from dropsense.synth import synthesize


def test_binary_layout(tmp_path):
    ts = TimeSeries(0.0, 1 / 50_000.0, np.array([1.0, -2.5, 3e-300]))
    io.write_bin(ts, tmp_path / "x.bin")
    raw = (tmp_path / "x.bin").read_bytes()
    assert raw[:4] == b"DLK1"
    assert struct.unpack("<d", raw[4:12])[0] == pytest.approx(50_000.0, rel=1e-12)
    assert struct.unpack("<Q", raw[12:20])[0] == 3
    assert np.array_equal(np.frombuffer(raw[20:], "<f8"), ts.samples)


def test_bin_csv_bin_roundtrip(tmp_path):
    ts, _ = synthesize(ref.matched_budget(0.5, seed=3))
    io.write_bin(ts, tmp_path / "a.bin")
    a = io.read_bin(tmp_path / "a.bin")
    io.write_csv(a, tmp_path / "a.csv")
    b = io.read_trace(tmp_path / "a.csv")
    io.write_bin(b, tmp_path / "b.bin")
    c = io.read_trace(tmp_path / "b.bin")
    ulps = np.abs(c.samples.view(np.int64) - ts.samples.view(np.int64))
    assert ulps.max() <= 1
    assert c.sample_rate == pytest.approx(ts.sample_rate, rel=1e-9)


def test_bad_files(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(io.TraceFormatError):
        io.read_bin(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(struct.pack("<4sdQ", b"DLK1", 1.0, 5) + bytes(8))
    with pytest.raises(io.TraceFormatError):
        io.read_bin(tmp_path / "short.bin")
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(io.TraceFormatError):
        io.read_csv(tmp_path / "bad.csv")
