"""Independent reference implementations used as test oracles.

Everything here is built by hand from layout tables and scalar loops, on
purpose: these helpers must not share code with the package paths they check.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from csiscope.model import CsiFrame, SubcarrierOrder

# --- random valid frames (wire-representable: int16 components) ---

N_CHOICES = (64, 128, 256)
BW_FOR_N = {64: 20, 128: 40, 256: 80}


def random_wire_frame(rng: np.random.Generator, n: int | None = None) -> CsiFrame:
    if n is None:
        n = int(rng.choice(N_CHOICES))
    re = rng.integers(-32768, 32768, size=n)
    im = rng.integers(-32768, 32768, size=n)
    return CsiFrame(
        timestamp_us=int(rng.integers(0, 2**63)),
        source_mac=bytes(rng.integers(0, 256, size=6, dtype=np.uint8)),
        seq=int(rng.integers(0, 65536)),
        rssi_dbm=int(rng.integers(-120, 1)),
        bandwidth_mhz=BW_FOR_N[n],
        subcarrier_order=SubcarrierOrder.FFT,
        csi=re.astype(np.float64) + 1j * im.astype(np.float64),
    )


# --- byte-builder for radio broadcast payloads (default layout) ---

def build_nexmon_payload(*, rssi: int, mac: bytes, seq: int, chanspec: int,
                         samples: list[tuple[int, int]],
                         magic: bytes = b"\x11\x11") -> bytes:
    """Hand-assembled payload: magic, rssi i8, fctl u8, mac, seq u16,
    core/stream u16, chanspec u16, chipver u16, then (re, im) int16 pairs."""
    out = bytearray()
    out += magic
    out += struct.pack("<b", rssi)
    out += b"\x80"  # frame control byte, ignored by the parser
    out += mac
    out += struct.pack("<H", seq)
    out += struct.pack("<H", 0x0000)  # core/spatial stream
    out += struct.pack("<H", chanspec)
    out += struct.pack("<H", 0x0103)  # chip version
    for re, im in samples:
        out += struct.pack("<hh", re, im)
    return bytes(out)


def chanspec_for_bw(bw_mhz: int, channel: int = 36) -> int:
    code = {20: 0x1000, 40: 0x1800, 80: 0x2000}[bw_mhz]
    return code | (channel & 0xFF)


# --- reference pcap writer ---

def build_udp_packet(payload: bytes, *, dport: int, sport: int = 5501) -> bytes:
    """Ethernet II / IPv4 / UDP around a payload, checksums zeroed."""
    udp = struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload
    total = 20 + len(udp)
    ip = struct.pack(">BBHHHBBH4s4s",
                     0x45, 0, total, 0x1234, 0x4000, 64, 17, 0,
                     bytes([192, 168, 1, 10]), bytes([255, 255, 255, 255]))
    eth = (b"\xff\xff\xff\xff\xff\xff"      # dst broadcast
           + b"\xb8\x27\xeb\x01\x02\x03"    # src
           + struct.pack(">H", 0x0800))
    return eth + ip + udp


def write_pcap(path: str, packets: list[tuple[int, bytes]]) -> None:
    """packets: (timestamp_us, raw ethernet frame). Classic little-endian
    microsecond pcap, linktype Ethernet."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1))
        for ts_us, data in packets:
            fh.write(struct.pack("<IIII", ts_us // 1_000_000,
                                 ts_us % 1_000_000, len(data), len(data)))
            fh.write(data)


def write_csi_pcap(path: str, frames: list[dict], *, dport: int = 5500) -> None:
    """frames: dicts with ts_us, rssi, mac, seq, chanspec, samples."""
    packets = []
    for f in frames:
        payload = build_nexmon_payload(rssi=f["rssi"], mac=f["mac"],
                                       seq=f["seq"], chanspec=f["chanspec"],
                                       samples=f["samples"])
        packets.append((f["ts_us"], build_udp_packet(payload, dport=dport)))
    write_pcap(path, packets)


# --- scalar reference loops ---

def itoh_unwrap_scalar(phases: list[float]) -> list[float]:
    """Plain-loop Itoh unwrap keeping corrected diffs in (-pi, pi]."""
    if not phases:
        return []
    out = [phases[0]]
    for i in range(1, len(phases)):
        d = phases[i] - out[-1]
        while d > math.pi:
            d -= 2 * math.pi
        while d <= -math.pi:
            d += 2 * math.pi
        out.append(out[-1] + d)
    return out


def inverse_reorder_scalar(values: list, n: int) -> list:
    """Undo the fft->linear permutation by table lookup."""
    half = n // 2
    out = [None] * n
    for k, v in enumerate(values):
        logical = k - half
        fft_index = logical if logical >= 0 else logical + n
        out[fft_index] = v
    return out


def population_std(values: list[float]) -> float:
    m = sum(values) / len(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))
