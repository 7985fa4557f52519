"""Bit-exact frame encoding/decoding.

Two byte layouts are handled here:

* WEF1, the canonical little-endian envelope used between the capture server
  and the studio (one frame per UDP datagram):

      offset  size  field
      0       4     magic "WEF1"
      4       1     version, u8 = 1
      5       1     rssi, i8 dBm
      6       6     source MAC
      12      2     seq, u16
      14      2     subcarrier count N, u16
      16      8     timestamp, u64 microseconds
      24      4*N   samples, N x (re i16, im i16)

* the raw payload a patched BCM43xx radio broadcasts over UDP. Exact offsets
  vary per chip, so every offset is carried in an :class:`IngestLayout`; the
  default models the common Raspberry Pi build. These payloads carry no
  timestamp; the capture host (or the pcap record header) supplies one.

`read_pcap_stream` walks a tcpdump capture of such broadcasts and yields one
frame per UDP packet on the CSI port, keeping the pcap record timestamps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator

import numpy as np

from .errors import (
    BadFieldRange,
    BadMagic,
    BadPcapMagic,
    InvalidFrame,
    TruncatedFrame,
    UnknownChanspec,
    UnknownLinkType,
)
from .model import (
    N_TO_BANDWIDTH,
    SUPPORTED_N,
    CsiFrame,
    SubcarrierOrder,
    validate_frame,
)

WEF1_MAGIC = b"WEF1"
WEF1_VERSION = 1
_WEF1_HEADER = struct.Struct("<4sBb6sHHQ")
WEF1_HEADER_LEN = _WEF1_HEADER.size  # 24

DEFAULT_UDP_PORT = 5500

_I16 = np.dtype("<i2")


def wef1_frame_len(n: int) -> int:
    return WEF1_HEADER_LEN + 4 * n


def encode_wire_frame(frame: CsiFrame) -> bytes:
    """Serialize a frame to the WEF1 layout.

    The wire carries int16 sample components and no order flag, so the frame
    must be FFT-ordered with integer-valued samples in i16 range; anything
    else cannot round-trip and raises InvalidFrame. `quantize_for_wire` turns
    an arbitrary frame into an encodable one.
    """
    report = validate_frame(frame)
    if not report.ok:
        raise InvalidFrame(str(report))
    if frame.subcarrier_order is not SubcarrierOrder.FFT:
        raise InvalidFrame("WEF1 carries FFT-ordered frames only")
    re = frame.csi.real
    im = frame.csi.imag
    if (not np.array_equal(re, np.rint(re))
            or not np.array_equal(im, np.rint(im))
            or np.any(re < -32768) or np.any(re > 32767)
            or np.any(im < -32768) or np.any(im > 32767)):
        raise InvalidFrame("samples are not int16-representable; quantize first")
    header = _WEF1_HEADER.pack(WEF1_MAGIC, WEF1_VERSION, frame.rssi_dbm,
                               frame.source_mac, frame.seq, frame.n,
                               frame.timestamp_us)
    samples = np.empty(2 * frame.n, dtype=_I16)
    samples[0::2] = re.astype(_I16)
    samples[1::2] = im.astype(_I16)
    return header + samples.tobytes()


def quantize_for_wire(frame: CsiFrame) -> CsiFrame:
    """Round samples to the nearest int16 (saturating) so the frame encodes."""
    re = np.clip(np.rint(frame.csi.real), -32768, 32767)
    im = np.clip(np.rint(frame.csi.imag), -32768, 32767)
    return CsiFrame(frame.timestamp_us, frame.source_mac, frame.seq,
                    frame.rssi_dbm, frame.bandwidth_mhz,
                    frame.subcarrier_order, re + 1j * im)


def parse_wire_frame(buf: bytes) -> CsiFrame:
    """Inverse of encode_wire_frame. Never reads past the buffer."""
    if len(buf) < 4:
        raise TruncatedFrame(f"{len(buf)} bytes, need at least 4 for the magic")
    if buf[:4] != WEF1_MAGIC:
        raise BadMagic(f"magic {buf[:4]!r}")
    if len(buf) < WEF1_HEADER_LEN:
        raise TruncatedFrame(f"{len(buf)} bytes, header needs {WEF1_HEADER_LEN}")
    _, version, rssi, mac, seq, n, ts = _WEF1_HEADER.unpack_from(buf)
    if version != WEF1_VERSION:
        raise BadFieldRange(f"unsupported WEF1 version {version}")
    if n not in SUPPORTED_N:
        raise BadFieldRange(f"subcarrier count {n} not in {set(SUPPORTED_N)}")
    if len(buf) != wef1_frame_len(n):
        raise TruncatedFrame(f"{len(buf)} bytes, N={n} requires {wef1_frame_len(n)}")
    if not -120 <= rssi <= 0:
        raise BadFieldRange(f"rssi {rssi} dBm outside [-120, 0]")
    pairs = np.frombuffer(buf, dtype=_I16, count=2 * n, offset=WEF1_HEADER_LEN)
    csi = pairs[0::2].astype(np.float64) + 1j * pairs[1::2].astype(np.float64)
    return CsiFrame(ts, mac, seq, rssi, N_TO_BANDWIDTH[n],
                    SubcarrierOrder.FFT, csi)


# Broadcom chanspec: bits 11..13 select the bandwidth.
CHANSPEC_BW_MASK = 0x3800
CHANSPEC_BW_MHZ = {0x1000: 20, 0x1800: 40, 0x2000: 80}


@dataclass(frozen=True)
class IngestLayout:
    """Byte offsets of the fields inside one radio broadcast payload.

    Defaults model the Nexmon-style Raspberry Pi payload: 2-byte magic,
    rssi i8, frame control u8 (skipped), source MAC, seq u16, core/stream u16
    (skipped), chanspec u16, chip version u16 (skipped), then interleaved
    int16 re/im CSI. All offsets are configurable because the layout differs
    between BCM43xx chips; validate against a real capture before trusting a
    new device.
    """

    magic: bytes = b"\x11\x11"
    magic_offset: int = 0
    rssi_offset: int = 2
    mac_offset: int = 4
    seq_offset: int = 10
    chanspec_offset: int = 14
    csi_offset: int = 18
    imag_first: bool = False


DEFAULT_INGEST_LAYOUT = IngestLayout()


def parse_nexmon_payload(buf: bytes, layout: IngestLayout = DEFAULT_INGEST_LAYOUT,
                         *, timestamp_us: int = 0) -> CsiFrame:
    """Decode one radio broadcast payload into an FFT-ordered frame.

    N is inferred from the CSI region length and must agree with the
    bandwidth the chanspec declares (N = bandwidth_mhz * 3.2).
    """
    if len(buf) < layout.csi_offset:
        raise TruncatedFrame(f"{len(buf)} bytes, CSI starts at {layout.csi_offset}")
    if layout.magic:
        got = buf[layout.magic_offset:layout.magic_offset + len(layout.magic)]
        if got != layout.magic:
            raise BadMagic(f"payload magic {got!r}")
    csi_region = len(buf) - layout.csi_offset
    if csi_region % 4 != 0:
        raise TruncatedFrame(f"CSI region of {csi_region} bytes is not a whole"
                             " number of int16 pairs")
    n = csi_region // 4
    chanspec = struct.unpack_from("<H", buf, layout.chanspec_offset)[0]
    bw = CHANSPEC_BW_MHZ.get(chanspec & CHANSPEC_BW_MASK)
    if bw is None:
        raise UnknownChanspec(f"chanspec 0x{chanspec:04x} has no known bandwidth")
    expected_n = int(bw * 3.2)
    if n != expected_n:
        raise UnknownChanspec(f"chanspec says {bw} MHz ({expected_n} subcarriers)"
                              f" but payload carries {n}")
    rssi = struct.unpack_from("<b", buf, layout.rssi_offset)[0]
    mac = buf[layout.mac_offset:layout.mac_offset + 6]
    seq = struct.unpack_from("<H", buf, layout.seq_offset)[0]
    pairs = np.frombuffer(buf, dtype=_I16, count=2 * n, offset=layout.csi_offset)
    a = pairs[0::2].astype(np.float64)
    b = pairs[1::2].astype(np.float64)
    csi = (b + 1j * a) if layout.imag_first else (a + 1j * b)
    return CsiFrame(timestamp_us, mac, seq, rssi, bw, SubcarrierOrder.FFT, csi)


# --- pcap ingestion ---

_PCAP_MAGIC_LE = 0xA1B2C3D4
_PCAP_GLOBAL = struct.Struct("<IHHiIII")
_PCAP_GLOBAL_BE = struct.Struct(">IHHiIII")
_PCAP_RECORD = struct.Struct("<IIII")
_PCAP_RECORD_BE = struct.Struct(">IIII")

_ETHERTYPE_IPV4 = 0x0800
_IP_PROTO_UDP = 17


class PcapReader:
    """Iterate the CSI frames inside a pcap capture of radio UDP broadcasts.

    Frames come out in file order with pcap record timestamps. Records that
    fail to parse are skipped and counted in ``parse_errors``; packets that
    are simply not CSI traffic (other ports, non-UDP) are counted in
    ``ignored``. Single consumer only.
    """

    def __init__(self, stream: BinaryIO, *,
                 layout: IngestLayout = DEFAULT_INGEST_LAYOUT,
                 port: int = DEFAULT_UDP_PORT,
                 payload_format: str = "nexmon"):
        if payload_format not in ("nexmon", "wef1"):
            raise ValueError(f"payload_format {payload_format!r}")
        self._stream = stream
        self._layout = layout
        self._port = port
        self._payload_format = payload_format
        self.parse_errors = 0
        self.ignored = 0
        header = stream.read(_PCAP_GLOBAL.size)
        if len(header) < _PCAP_GLOBAL.size:
            raise BadPcapMagic("file shorter than a pcap global header")
        magic_le = struct.unpack_from("<I", header)[0]
        magic_be = struct.unpack_from(">I", header)[0]
        if magic_le == _PCAP_MAGIC_LE:
            self._global = _PCAP_GLOBAL
            self._record = _PCAP_RECORD
        elif magic_be == _PCAP_MAGIC_LE:
            self._global = _PCAP_GLOBAL_BE
            self._record = _PCAP_RECORD_BE
        else:
            raise BadPcapMagic(f"magic 0x{magic_le:08x}")
        (_, _, _, _, _, _, linktype) = self._global.unpack(header)
        if linktype != 1:
            raise UnknownLinkType(f"linktype {linktype}, only Ethernet (1) supported")

    def __iter__(self) -> Iterator[CsiFrame]:
        return self

    def __next__(self) -> CsiFrame:
        while True:
            rec = self._stream.read(self._record.size)
            if len(rec) == 0:
                raise StopIteration
            if len(rec) < self._record.size:
                self.parse_errors += 1
                raise StopIteration
            ts_sec, ts_usec, incl_len, _orig = self._record.unpack(rec)
            data = self._stream.read(incl_len)
            if len(data) < incl_len:
                self.parse_errors += 1
                raise StopIteration
            payload = self._udp_payload(data)
            if payload is None:
                continue
            ts = ts_sec * 1_000_000 + ts_usec
            try:
                if self._payload_format == "wef1":
                    wire = parse_wire_frame(payload)
                    frame = CsiFrame(ts, wire.source_mac, wire.seq, wire.rssi_dbm,
                                     wire.bandwidth_mhz, wire.subcarrier_order,
                                     wire.csi)
                else:
                    frame = parse_nexmon_payload(payload, self._layout,
                                                 timestamp_us=ts)
                if not validate_frame(frame).ok:
                    self.parse_errors += 1
                    continue
                return frame
            except (BadMagic, TruncatedFrame, BadFieldRange, UnknownChanspec,
                    struct.error):
                self.parse_errors += 1
                continue

    def _udp_payload(self, data: bytes) -> bytes | None:
        """Peel Ethernet/IPv4/UDP; None when the packet is not CSI traffic."""
        if len(data) < 14:
            self.ignored += 1
            return None
        ethertype = struct.unpack_from(">H", data, 12)[0]
        if ethertype != _ETHERTYPE_IPV4:
            self.ignored += 1
            return None
        ip_off = 14
        if len(data) < ip_off + 20:
            self.ignored += 1
            return None
        ver_ihl = data[ip_off]
        if ver_ihl >> 4 != 4:
            self.ignored += 1
            return None
        ihl = (ver_ihl & 0xF) * 4
        proto = data[ip_off + 9]
        if proto != _IP_PROTO_UDP:
            self.ignored += 1
            return None
        udp_off = ip_off + ihl
        if len(data) < udp_off + 8:
            self.ignored += 1
            return None
        dport = struct.unpack_from(">H", data, udp_off + 2)[0]
        if dport != self._port:
            self.ignored += 1
            return None
        udp_len = struct.unpack_from(">H", data, udp_off + 4)[0]
        end = min(len(data), udp_off + max(udp_len, 8))
        return data[udp_off + 8:end]


def read_pcap_stream(stream: BinaryIO, *,
                     layout: IngestLayout = DEFAULT_INGEST_LAYOUT,
                     port: int = DEFAULT_UDP_PORT,
                     payload_format: str = "nexmon") -> PcapReader:
    """Open a pcap byte stream positioned at the global header."""
    return PcapReader(stream, layout=layout, port=port,
                      payload_format=payload_format)
