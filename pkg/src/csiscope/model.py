"""Core domain types: captured CSI frames, their polar (amplitude/phase) views,
classification results, and frame validation.

Unit conventions used everywhere in the package:

* timestamps are integer microseconds since the Unix epoch, assigned by the
  capture host at reception,
* RSSI is a signed integer in dBm at capture, promoted to float only after
  smoothing,
* the subcarrier count N is tied to the channel bandwidth: 64 per 20 MHz,
  so N in {64, 128, 256} for 20/40/80 MHz.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

SUPPORTED_N = (64, 128, 256)
N_TO_BANDWIDTH = {64: 20, 128: 40, 256: 80}
BANDWIDTH_TO_N = {20: 64, 40: 128, 80: 256}

RSSI_MIN_DBM = -120
RSSI_MAX_DBM = 0


class SubcarrierOrder(Enum):
    """Hardware emits subcarriers FFT-indexed [0..N/2-1, -N/2..-1];
    linear order is [-N/2 .. N/2-1]."""

    FFT = "fft"
    LINEAR = "linear"


def parse_mac(text: str) -> bytes:
    """Accepts aa:bb:cc:dd:ee:ff, aa-bb-.., or 12 hex digits."""
    cleaned = text.strip().lower().replace(":", "").replace("-", "")
    if len(cleaned) != 12:
        raise ValueError(f"not a MAC address: {text!r}")
    return bytes.fromhex(cleaned)


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def format_mac_compact(mac: bytes) -> str:
    return mac.hex()


@dataclass(frozen=True, slots=True)
class FrameMeta:
    """Header fields shared by a frame and all views derived from it."""

    timestamp_us: int
    source_mac: bytes
    seq: int
    rssi_dbm: int
    bandwidth_mhz: int
    subcarrier_order: SubcarrierOrder
    n: int


@dataclass(frozen=True, eq=False)
class CsiFrame:
    """One captured frame: header fields plus the complex CSI vector.

    ``csi`` holds one complex channel estimate per subcarrier; magnitude is the
    attenuation, angle the induced phase shift. Treat instances as immutable;
    the sample array is marked read-only.
    """

    timestamp_us: int
    source_mac: bytes
    seq: int
    rssi_dbm: int
    bandwidth_mhz: int
    subcarrier_order: SubcarrierOrder
    csi: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.csi, dtype=np.complex128)
        arr.setflags(write=False)
        object.__setattr__(self, "csi", arr)

    @property
    def n(self) -> int:
        return len(self.csi)

    def meta(self) -> FrameMeta:
        return FrameMeta(self.timestamp_us, self.source_mac, self.seq,
                         self.rssi_dbm, self.bandwidth_mhz,
                         self.subcarrier_order, self.n)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsiFrame):
            return NotImplemented
        return (self.timestamp_us == other.timestamp_us
                and self.source_mac == other.source_mac
                and self.seq == other.seq
                and self.rssi_dbm == other.rssi_dbm
                and self.bandwidth_mhz == other.bandwidth_mhz
                and self.subcarrier_order == other.subcarrier_order
                and self.csi.shape == other.csi.shape
                and bool(np.array_equal(self.csi, other.csi)))


@dataclass(frozen=True, eq=False)
class PolarFrame:
    """Preprocessed view of a frame: amplitudes a_i and phases Phi_i plus the
    (possibly reordered/narrowed) raw complex samples retained for the compact
    recording formats.

    ``rssi_smoothed_dbm`` starts as the raw RSSI promoted to float and is
    replaced when the smoothing plugin runs. ``applied_plugins`` records the
    exact plugin order the chain executed for this frame.
    """

    meta: FrameMeta
    amplitudes: np.ndarray
    phases: np.ndarray
    rssi_smoothed_dbm: float
    applied_plugins: tuple[str, ...] = ()
    csi: np.ndarray | None = None
    agc_zero_power: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        phis = np.asarray(self.phases, dtype=np.float64)
        if len(amps) != len(phis) or len(amps) != self.meta.n:
            raise ValueError("amplitude/phase length must equal meta.n")
        amps.setflags(write=False)
        phis.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phis)
        if self.csi is not None:
            arr = np.asarray(self.csi, dtype=np.complex128)
            arr.setflags(write=False)
            object.__setattr__(self, "csi", arr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolarFrame):
            return NotImplemented
        same_csi = (self.csi is None) == (other.csi is None) and (
            self.csi is None or bool(np.array_equal(self.csi, other.csi)))
        return (self.meta == other.meta
                and bool(np.array_equal(self.amplitudes, other.amplitudes))
                and bool(np.array_equal(self.phases, other.phases))
                and self.rssi_smoothed_dbm == other.rssi_smoothed_dbm
                and self.applied_plugins == other.applied_plugins
                and self.agc_zero_power == other.agc_zero_power
                and same_csi)


# run_chain and the exporter speak in terms of processed frames; structurally
# they are polar views with provenance, so one class serves both names.
ProcessedFrame = PolarFrame


@dataclass(frozen=True, slots=True)
class ClassificationResult:
    """One classifier verdict for a time window."""

    class_id: int
    confidence: float
    window_end_us: int

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True, slots=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """Every invariant a frame violates; empty means the frame is valid."""

    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> tuple[str, ...]:
        return tuple(v.code for v in self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"{v.code}: {v.message}" for v in self.violations)


def validate_frame(frame: CsiFrame) -> ValidationReport:
    """Check every per-frame invariant. Never raises; reports instead.

    Timestamp monotonicity is a stream property checked by stream consumers,
    not here.
    """
    bad: list[Violation] = []
    n = frame.n
    if n not in SUPPORTED_N:
        bad.append(Violation("subcarrier-count",
                             f"N={n} not in {set(SUPPORTED_N)}"))
    elif N_TO_BANDWIDTH[n] != frame.bandwidth_mhz:
        bad.append(Violation("bandwidth-mismatch",
                             f"N={n} requires {N_TO_BANDWIDTH[n]} MHz, "
                             f"frame declares {frame.bandwidth_mhz}"))
    if frame.bandwidth_mhz not in BANDWIDTH_TO_N:
        bad.append(Violation("bandwidth-range",
                             f"bandwidth {frame.bandwidth_mhz} MHz not in {{20, 40, 80}}"))
    if not RSSI_MIN_DBM <= frame.rssi_dbm <= RSSI_MAX_DBM:
        bad.append(Violation("rssi-range",
                             f"rssi {frame.rssi_dbm} dBm outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]"))
    if len(frame.source_mac) != 6:
        bad.append(Violation("mac-length", f"{len(frame.source_mac)} bytes, need 6"))
    if not 0 <= frame.seq <= 0xFFFF:
        bad.append(Violation("seq-range", f"seq {frame.seq} not a u16"))
    if not 0 <= frame.timestamp_us < 2**64:
        bad.append(Violation("timestamp-range",
                             f"timestamp {frame.timestamp_us} not a u64 microsecond count"))
    if not np.all(np.isfinite(frame.csi)):
        bad.append(Violation("sample-finite", "CSI contains NaN or Inf"))
    return ValidationReport(tuple(bad))
