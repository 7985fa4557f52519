import numpy as np
import pytest

from csiscope.model import (
    CsiFrame,
    SubcarrierOrder,
    format_mac,
    format_mac_compact,
    parse_mac,
    validate_frame,
)

from .oracles import random_wire_frame


def make_frame(**overrides):
    fields = dict(
        timestamp_us=1_700_000_000_000_000,
        source_mac=bytes.fromhex("aabbccddeeff"),
        seq=7,
        rssi_dbm=-55,
        bandwidth_mhz=20,
        subcarrier_order=SubcarrierOrder.FFT,
        csi=np.ones(64) + 1j * np.zeros(64),
    )
    fields.update(overrides)
    return CsiFrame(**fields)


def test_valid_frame_has_empty_report():
    report = validate_frame(make_frame())
    assert report.ok
    assert report.codes() == ()


def test_bad_subcarrier_count_reported():
    frame = make_frame(csi=np.ones(60))
    assert "subcarrier-count" in validate_frame(frame).codes()


def test_rssi_out_of_range_reported():
    frame = make_frame(rssi_dbm=10)
    assert "rssi-range" in validate_frame(frame).codes()


def test_bandwidth_mismatch_reported():
    frame = make_frame(bandwidth_mhz=40)
    assert "bandwidth-mismatch" in validate_frame(frame).codes()


def test_nan_sample_reported():
    csi = np.ones(64, dtype=complex)
    csi[3] = np.nan + 1j
    assert "sample-finite" in validate_frame(make_frame(csi=csi)).codes()


def test_validation_is_pure():
    frame = make_frame(rssi_dbm=5, csi=np.ones(60))
    assert validate_frame(frame) == validate_frame(frame)


def test_multiple_violations_all_listed():
    frame = make_frame(rssi_dbm=5, seq=70000, source_mac=b"\x01\x02")
    codes = validate_frame(frame).codes()
    assert {"rssi-range", "seq-range", "mac-length"} <= set(codes)


def test_frame_equality_covers_samples():
    rng = np.random.default_rng(3)
    a = random_wire_frame(rng, n=64)
    b = CsiFrame(a.timestamp_us, a.source_mac, a.seq, a.rssi_dbm,
                 a.bandwidth_mhz, a.subcarrier_order, a.csi.copy())
    assert a == b
    csi = a.csi.copy()
    csi[0] += 1
    c = CsiFrame(a.timestamp_us, a.source_mac, a.seq, a.rssi_dbm,
                 a.bandwidth_mhz, a.subcarrier_order, csi)
    assert a != c


def test_frame_array_is_read_only():
    frame = make_frame()
    with pytest.raises(ValueError):
        frame.csi[0] = 5.0


def test_mac_helpers_round_trip():
    mac = parse_mac("aa:bb:cc:dd:ee:ff")
    assert mac == bytes.fromhex("aabbccddeeff")
    assert format_mac(mac) == "aa:bb:cc:dd:ee:ff"
    assert format_mac_compact(mac) == "aabbccddeeff"
    assert parse_mac("AABBCCDDEEFF") == mac
    with pytest.raises(ValueError):
        parse_mac("not-a-mac")
