import os

import numpy as np
import pytest

from csiscope.errors import (
    BadHeader,
    NMismatch,
    TruncatedRecord,
    UnsupportedFormat,
)
from csiscope.model import PolarFrame
from csiscope.pipeline import PipelineState, default_chain, run_chain
from csiscope.recording import (
    QueuedRecorder,
    binary_record_size,
    open_recording,
    read_recording,
)

from .oracles import random_wire_frame


def processed_frames(count, seed=0, chain=None):
    rng = np.random.default_rng(seed)
    config = chain if chain is not None else default_chain()
    state = PipelineState()
    out = []
    for _ in range(count):
        frame = random_wire_frame(rng, n=64)
        out.append(run_chain(frame, config, state))
    return out


def raw_frames(count, seed=0):
    """Chain with everything disabled: raw polar view over raw samples."""
    from csiscope.pipeline import ChainConfig, PluginInstance
    config = ChainConfig(plugins=(PluginInstance("reorder", 10, False),),
                         version=1)
    rng = np.random.default_rng(seed)
    state = PipelineState()
    return [run_chain(random_wire_frame(rng, n=64), config, state)
            for _ in range(count)]


# --- headers and layout ---

def test_csv_simple_header(tmp_path):
    path = tmp_path / "r.csv"
    open_recording(str(path), "csv-simple", 64).close()
    header = path.read_text().splitlines()[0]
    assert header.startswith("timestamp_us,mac,seq,rssi_dbm,amp_0,")
    cols = header.split(",")
    assert cols[4:68] == [f"amp_{i}" for i in range(64)]
    assert cols[68:] == [f"phase_{i}" for i in range(64)]


def test_binary_header_layout(tmp_path):
    path = tmp_path / "r.bin"
    open_recording(str(path), "binary", 64).close()
    blob = path.read_bytes()
    assert blob[:4] == b"WEYR"
    assert blob[4] == 1
    assert int.from_bytes(blob[5:7], "little") == 64
    assert len(blob) == 8


def test_unsupported_format(tmp_path):
    with pytest.raises(UnsupportedFormat):
        open_recording(str(tmp_path / "x"), "json", 64)


def test_open_unwritable_path_raises_oserror(tmp_path):
    target = tmp_path / "nodir" / "r.bin"
    with pytest.raises(OSError):
        open_recording(str(target), "binary", 64)


def test_binary_record_size_n64(tmp_path):
    path = tmp_path / "r.bin"
    with open_recording(str(path), "binary", 64) as rec:
        rec.append(raw_frames(1)[0])
    assert binary_record_size(64) == 273
    assert len(path.read_bytes()) == 8 + 273


def test_n_mismatch_rejected(tmp_path):
    frame = raw_frames(1)[0]
    with open_recording(str(tmp_path / "r.bin"), "binary", 128) as rec:
        with pytest.raises(NMismatch):
            rec.append(frame)


def test_csv_simple_formats_six_significant_digits(tmp_path):
    frame = raw_frames(1)[0]
    ones = PolarFrame(meta=frame.meta, amplitudes=np.ones(64),
                      phases=np.zeros(64),
                      rssi_smoothed_dbm=frame.rssi_smoothed_dbm, csi=frame.csi)
    path = tmp_path / "r.csv"
    with open_recording(str(path), "csv-simple", 64) as rec:
        rec.append(ones)
    row = path.read_text().splitlines()[1].split(",")
    assert row[4:68] == ["1.00000"] * 64


# --- round trips ---

def test_binary_round_trip_bit_exact(tmp_path):
    frames = raw_frames(100, seed=1)
    path = tmp_path / "r.bin"
    with open_recording(str(path), "binary", 64) as rec:
        for p in frames:
            rec.append(p)
    meta, it = read_recording(str(path))
    got = list(it)
    assert meta.format == "binary" and meta.n == 64
    assert len(got) == 100
    for a, b in zip(frames, got):
        assert b.meta.timestamp_us == a.meta.timestamp_us
        assert b.meta.source_mac == a.meta.source_mac
        assert b.meta.seq == a.meta.seq
        assert b.meta.rssi_dbm == a.meta.rssi_dbm
        assert np.array_equal(b.csi, a.csi)


def test_csv_simple_round_trip_within_1e5_relative(tmp_path):
    frames = processed_frames(20, seed=2)
    path = tmp_path / "r.csv"
    with open_recording(str(path), "csv-simple", 64) as rec:
        for p in frames:
            rec.append(p)
    _, it = read_recording(str(path))
    got = list(it)
    assert len(got) == 20
    for a, b in zip(frames, got):
        assert b.meta.timestamp_us == a.meta.timestamp_us
        assert b.meta.source_mac == a.meta.source_mac
        np.testing.assert_allclose(b.amplitudes, a.amplitudes, rtol=1e-5,
                                   atol=1e-300)
        np.testing.assert_allclose(b.phases, a.phases, rtol=1e-5, atol=1e-5)


def test_csv_compact_round_trip_restores_samples(tmp_path):
    frames = raw_frames(10, seed=3)
    path = tmp_path / "r.csv"
    with open_recording(str(path), "csv-compact", 64) as rec:
        for p in frames:
            rec.append(p)
    meta, it = read_recording(str(path))
    got = list(it)
    assert meta.format == "csv-compact"
    for a, b in zip(frames, got):
        assert np.array_equal(b.csi, a.csi)


# --- size ordering ---

def test_size_ordering_binary_compact_simple(tmp_path):
    frames = processed_frames(1000, seed=4)
    sizes = {}
    for fmt, name in (("binary", "r.bin"), ("csv-compact", "c.csv"),
                      ("csv-simple", "s.csv")):
        path = tmp_path / name
        with open_recording(str(path), fmt, 64) as rec:
            for p in frames:
                rec.append(p)
        sizes[fmt] = os.path.getsize(path)
    assert sizes["binary"] < sizes["csv-compact"] < sizes["csv-simple"]


# --- truncation ---

def test_binary_truncation_at_every_byte_of_last_record(tmp_path):
    frames = raw_frames(3, seed=5)
    path = tmp_path / "r.bin"
    with open_recording(str(path), "binary", 64) as rec:
        for p in frames:
            rec.append(p)
    blob = path.read_bytes()
    size = binary_record_size(64)
    start_last = len(blob) - size
    for cut in range(start_last + 1, len(blob)):
        trunc = tmp_path / "t.bin"
        trunc.write_bytes(blob[:cut])
        _, it = read_recording(str(trunc))
        got = []
        with pytest.raises(TruncatedRecord):
            for p in it:
                got.append(p)
        assert len(got) == 2
        assert np.array_equal(got[1].csi, frames[1].csi)


def test_csv_truncation_mid_row(tmp_path):
    frames = processed_frames(3, seed=6)
    path = tmp_path / "r.csv"
    with open_recording(str(path), "csv-simple", 64) as rec:
        for p in frames:
            rec.append(p)
    text = path.read_text()
    cut = tmp_path / "t.csv"
    cut.write_text(text[:len(text) - 40])
    _, it = read_recording(str(cut))
    got = []
    with pytest.raises(TruncatedRecord):
        for p in it:
            got.append(p)
    assert len(got) == 2


def test_read_garbage_header(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"NOPE....")
    with pytest.raises(BadHeader):
        read_recording(str(path))


def test_read_binary_bad_version(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"WEYR\x07\x40\x00\x00")
    with pytest.raises(BadHeader):
        read_recording(str(path))


# --- queued recorder ---

def test_queued_recorder_lossless(tmp_path):
    frames = raw_frames(500, seed=7)
    path = tmp_path / "q.bin"
    recorder = QueuedRecorder(open_recording(str(path), "binary", 64))
    for p in frames:
        recorder.append(p)
    recorder.close()
    _, it = read_recording(str(path))
    got = list(it)
    assert len(got) == 500
    assert np.array_equal(got[-1].csi, frames[-1].csi)
