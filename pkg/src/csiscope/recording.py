"""Recording processed frames to files and reading them back.

Three formats, trading size against convenience:

* ``csv-simple``: one row per frame with decimal amplitudes and phases at six
  significant digits; the header row is
  ``timestamp_us,mac,seq,rssi_dbm,amp_0..amp_{N-1},phase_0..phase_{N-1}``.
* ``csv-compact``: integer timestamp, 12-hex MAC, RSSI, then the raw
  interleaved int16 re/im pairs as integers. Size-optimized: storing the
  complex samples once beats storing two derived float vectors.
* ``binary``: 8-byte header ``WEYR``, version u8, N u16, pad u8, then fixed
  little-endian records of 17 + 4N bytes
  (u64 timestamp, 6-byte MAC, u16 seq, i8 rssi, N x (re i16, im i16)).

Binary and csv-compact persist the retained complex view, so they are exact
for captured radio data; csv-simple persists the polar view the chain
produced. Appends are atomic at record granularity: a truncated file yields
every complete record, then TruncatedRecord.
"""

from __future__ import annotations

import io
import os
import queue
import struct
import threading
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import (
    BadHeader,
    NMismatch,
    TruncatedRecord,
    UnsupportedFormat,
)
from .model import (
    N_TO_BANDWIDTH,
    SUPPORTED_N,
    FrameMeta,
    PolarFrame,
    ProcessedFrame,
    SubcarrierOrder,
    format_mac,
    format_mac_compact,
    parse_mac,
)

FORMATS = ("csv-simple", "csv-compact", "binary")

BINARY_MAGIC = b"WEYR"
BINARY_VERSION = 1
_BINARY_HEADER = struct.Struct("<4sBHB")
_BINARY_RECORD_FIXED = struct.Struct("<Q6sHb")  # 17 bytes before samples
_I16 = np.dtype("<i2")


def binary_record_size(n: int) -> int:
    return _BINARY_RECORD_FIXED.size + 4 * n


@dataclass
class RecordingMeta:
    format: str
    path: str
    n: int
    started_us: int = 0
    chain_version: int = 0
    label: str | None = None


def _complex_to_i16_pairs(p: ProcessedFrame) -> np.ndarray:
    """Interleaved re/im int16, saturating. Frames without a retained complex
    view (e.g. read back from csv-simple) are reconstructed from the polar
    data first."""
    if p.csi is not None:
        re = p.csi.real
        im = p.csi.imag
    else:
        re = p.amplitudes * np.cos(p.phases)
        im = p.amplitudes * np.sin(p.phases)
    out = np.empty(2 * p.meta.n, dtype=_I16)
    out[0::2] = np.clip(np.rint(re), -32768, 32767).astype(_I16)
    out[1::2] = np.clip(np.rint(im), -32768, 32767).astype(_I16)
    return out


class RecordingHandle:
    """One open recording; format and N are fixed for its whole life."""

    def __init__(self, path: str, fmt: str, n: int, *, started_us: int = 0,
                 chain_version: int = 0, label: str | None = None):
        if fmt not in FORMATS:
            raise UnsupportedFormat(fmt)
        if n not in SUPPORTED_N:
            raise NMismatch(f"recording N must be one of {SUPPORTED_N}, got {n}")
        self.meta = RecordingMeta(fmt, path, n, started_us, chain_version, label)
        self.frames_written = 0
        self._closed = False
        if fmt == "binary":
            self._file: io.IOBase = open(path, "wb")
            self._file.write(_BINARY_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, n, 0))
        else:
            self._file = open(path, "w", encoding="utf-8", newline="")
            self._file.write(_csv_header(fmt, n) + "\n")

    @property
    def n(self) -> int:
        return self.meta.n

    def append(self, p: ProcessedFrame) -> None:
        if self._closed:
            raise ValueError("recording closed")
        if p.meta.n != self.meta.n:
            raise NMismatch(f"frame N={p.meta.n}, recording N={self.meta.n}")
        fmt = self.meta.format
        if fmt == "binary":
            head = _BINARY_RECORD_FIXED.pack(p.meta.timestamp_us,
                                             p.meta.source_mac, p.meta.seq,
                                             p.meta.rssi_dbm)
            self._file.write(head + _complex_to_i16_pairs(p).tobytes())
        elif fmt == "csv-compact":
            pairs = _complex_to_i16_pairs(p)
            row = ",".join((str(p.meta.timestamp_us),
                            format_mac_compact(p.meta.source_mac),
                            str(p.meta.seq), str(p.meta.rssi_dbm),
                            ",".join(str(v) for v in pairs.tolist())))
            self._file.write(row + "\n")
        else:
            values = np.concatenate((p.amplitudes, p.phases))
            row = ",".join((str(p.meta.timestamp_us),
                            format_mac(p.meta.source_mac),
                            str(p.meta.seq), str(p.meta.rssi_dbm),
                            ",".join(format(v, "#.6g") for v in values.tolist())))
            self._file.write(row + "\n")
        self.frames_written += 1

    def close(self) -> None:
        if not self._closed:
            self._file.flush()
            os.fsync(self._file.fileno())
            self._file.close()
            self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _csv_header(fmt: str, n: int) -> str:
    base = "timestamp_us,mac,seq,rssi_dbm"
    if fmt == "csv-simple":
        cols = [f"amp_{i}" for i in range(n)] + [f"phase_{i}" for i in range(n)]
    else:
        cols = []
        for i in range(n):
            cols += [f"re_{i}", f"im_{i}"]
    return base + "," + ",".join(cols)


def open_recording(path: str, fmt: str, n: int, *, started_us: int = 0,
                   chain_version: int = 0, label: str | None = None) -> RecordingHandle:
    return RecordingHandle(path, fmt, n, started_us=started_us,
                           chain_version=chain_version, label=label)


def append_frame(handle: RecordingHandle, p: ProcessedFrame) -> None:
    handle.append(p)


def _meta_from_row(ts: int, mac: bytes, seq: int, rssi: int, n: int) -> FrameMeta:
    return FrameMeta(ts, mac, seq, rssi, N_TO_BANDWIDTH.get(n, 0),
                     SubcarrierOrder.LINEAR, n)


def _read_binary(path: str) -> tuple[RecordingMeta, Iterator[ProcessedFrame]]:
    fh = open(path, "rb")
    header = fh.read(_BINARY_HEADER.size)
    if len(header) < _BINARY_HEADER.size:
        fh.close()
        raise BadHeader("file shorter than the binary recording header")
    magic, version, n, _pad = _BINARY_HEADER.unpack(header)
    if magic != BINARY_MAGIC:
        fh.close()
        raise BadHeader(f"magic {magic!r}")
    if version != BINARY_VERSION or n not in SUPPORTED_N:
        fh.close()
        raise BadHeader(f"version {version}, N {n}")
    meta = RecordingMeta("binary", path, n)
    size = binary_record_size(n)

    def records() -> Iterator[ProcessedFrame]:
        with fh:
            while True:
                chunk = fh.read(size)
                if not chunk:
                    return
                if len(chunk) < size:
                    raise TruncatedRecord(
                        f"{len(chunk)} trailing bytes, record needs {size}")
                ts, mac, seq, rssi = _BINARY_RECORD_FIXED.unpack_from(chunk)
                pairs = np.frombuffer(chunk, dtype=_I16, count=2 * n,
                                      offset=_BINARY_RECORD_FIXED.size)
                csi = (pairs[0::2].astype(np.float64)
                       + 1j * pairs[1::2].astype(np.float64))
                yield PolarFrame(meta=_meta_from_row(ts, mac, seq, rssi, n),
                                 amplitudes=np.abs(csi), phases=np.angle(csi),
                                 rssi_smoothed_dbm=float(rssi), csi=csi)

    return meta, records()


def _read_csv(path: str) -> tuple[RecordingMeta, Iterator[ProcessedFrame]]:
    fh = open(path, "r", encoding="utf-8", newline="")
    header = fh.readline().rstrip("\n")
    cols = header.split(",")
    if len(cols) < 5 or cols[:4] != ["timestamp_us", "mac", "seq", "rssi_dbm"]:
        fh.close()
        raise BadHeader(f"unrecognised csv header {header[:60]!r}")
    if cols[4].startswith("amp_"):
        fmt = "csv-simple"
        n = (len(cols) - 4) // 2
    elif cols[4].startswith("re_"):
        fmt = "csv-compact"
        n = (len(cols) - 4) // 2
    else:
        fh.close()
        raise BadHeader(f"unrecognised csv column {cols[4]!r}")
    if n not in SUPPORTED_N or len(cols) != 4 + 2 * n:
        fh.close()
        raise BadHeader(f"column count {len(cols)} does not fit a supported N")
    meta = RecordingMeta(fmt, path, n)

    def rows() -> Iterator[ProcessedFrame]:
        with fh:
            for raw in fh:
                line = raw.rstrip("\n")
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 4 + 2 * n or raw[-1:] != "\n":
                    raise TruncatedRecord("file ends mid-row")
                try:
                    ts = int(parts[0])
                    mac = parse_mac(parts[1])
                    seq = int(parts[2])
                    rssi = int(parts[3])
                    if fmt == "csv-simple":
                        values = np.asarray([float(v) for v in parts[4:]])
                        amps, phis = values[:n], values[n:]
                        csi = None
                    else:
                        ints = np.asarray([int(v) for v in parts[4:]],
                                          dtype=np.float64)
                        csi = ints[0::2] + 1j * ints[1::2]
                        amps, phis = np.abs(csi), np.angle(csi)
                except ValueError as exc:
                    raise TruncatedRecord(f"unparseable row: {exc}") from exc
                yield PolarFrame(meta=_meta_from_row(ts, mac, seq, rssi, n),
                                 amplitudes=amps, phases=phis,
                                 rssi_smoothed_dbm=float(rssi), csi=csi)

    return meta, rows()


def read_recording(path: str) -> tuple[RecordingMeta, Iterator[ProcessedFrame]]:
    """Detect the format from the file header and iterate its frames.

    Binary recordings round-trip bit-exactly; csv-simple preserves the polar
    view to six significant digits; csv-compact restores the raw complex
    samples and re-derives amplitude/phase from them.
    """
    with open(path, "rb") as probe:
        head = probe.read(4)
    if head == BINARY_MAGIC:
        return _read_binary(path)
    return _read_csv(path)


class QueuedRecorder:
    """Thread that drains a bounded queue into a RecordingHandle.

    Unlike the live view, recording must be lossless, so the queue blocks
    producers when full instead of dropping.
    """

    QUEUE_DEPTH = 4096

    def __init__(self, handle: RecordingHandle):
        self.handle = handle
        self._queue: queue.Queue = queue.Queue(maxsize=self.QUEUE_DEPTH)
        self._thread = threading.Thread(target=self._drain, daemon=True,
                                        name="csiscope-recorder")
        self._thread.start()

    def _drain(self):
        while True:
            item = self._queue.get()
            if item is None:
                return
            self.handle.append(item)

    def append(self, p: ProcessedFrame) -> None:
        self._queue.put(p)

    def close(self) -> None:
        self._queue.put(None)
        self._thread.join()
        self.handle.close()
