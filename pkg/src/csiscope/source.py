"""Frame sources: live UDP, pcap replay, and a deterministic synthetic channel.

A source is opened from a URI:

    udp://0.0.0.0:5500            bind and listen for WEF1 datagrams
    udp://0.0.0.0:5500?fmt=nexmon same, but payloads use the radio layout
    pcap:///path/to/capture.pcap  replay a capture (?rate=9 paces it)
    synth://pattern-a?seed=42     seeded synthetic generator
                                  (&mode=offline, &frames=2700)

The synthetic generator realises the flat-channel model: each emitted frame is
the per-subcarrier channel vector with optional band-limited sinusoidal
modulation plus complex white noise, so recorded activity patterns can be
reproduced on a desk without any radio. The stream is a pure function of
(profile, seed, frame index).
"""

from __future__ import annotations

import math
import os
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Iterator
from urllib.parse import parse_qs, urlsplit

import numpy as np

from .codec import (
    DEFAULT_INGEST_LAYOUT,
    DEFAULT_UDP_PORT,
    IngestLayout,
    PcapReader,
    parse_nexmon_payload,
    parse_wire_frame,
    read_pcap_stream,
)
from .errors import (
    BadUri,
    BindFailed,
    CsiScopeError,
    EndOfStream,
    SourceClosed,
    UnknownProfile,
)
from .model import N_TO_BANDWIDTH, CsiFrame, SubcarrierOrder, validate_frame


def default_udp_port() -> int:
    """UDP default 5500, overridable through CSISCOPE_UDP_PORT."""
    return int(os.environ.get("CSISCOPE_UDP_PORT", DEFAULT_UDP_PORT))


@dataclass(frozen=True)
class SourceUri:
    scheme: str
    target: str
    rate_hz: float | None = None
    params: dict = field(default_factory=dict)


def parse_source_uri(text: str) -> SourceUri:
    parts = urlsplit(text)
    scheme = parts.scheme.lower()
    if scheme not in ("udp", "pcap", "synth"):
        raise BadUri(f"unknown scheme in {text!r}")
    target = parts.netloc + parts.path
    if not target:
        raise BadUri(f"empty target in {text!r}")
    params = {k: v[-1] for k, v in parse_qs(parts.query).items()}
    rate = None
    if "rate" in params:
        rate = float(params.pop("rate"))
        if rate <= 0:
            raise BadUri("rate must be positive")
    return SourceUri(scheme, target, rate, params)


@dataclass(frozen=True)
class PatternBand:
    """Sinusoidal amplitude modulation over a half-open subcarrier range
    [lo, hi) in FFT index space."""

    lo: int
    hi: int
    freq_hz: float
    depth: float


@dataclass(frozen=True)
class SynthProfile:
    """Parameters of one synthetic activity pattern.

    With noise_sigma = 0 the amplitude of subcarrier i at time t is exactly
    base_amplitude * (1 + sum over bands of depth * sin(2*pi*f*t)) inside the
    band and base_amplitude outside.
    """

    name: str
    class_id: int
    n_subcarriers: int = 64
    frame_rate_hz: float = 9.0
    base_amplitude: float = 100.0
    pattern_bands: tuple[PatternBand, ...] = ()
    noise_sigma: float = 0.0
    rssi_mean_dbm: float = -55.0
    rssi_jitter_db: float = 0.0
    rng_seed: int = 1
    phase_slope_rad: float = 0.05
    source_mac: bytes = b"\x02\xc5\x10\x00\x00\x00"

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for band in self.pattern_bands:
            if not 0.0 <= band.depth <= 1.0:
                raise ValueError(f"band depth {band.depth} outside [0, 1]")
            if not (0 <= band.lo < band.hi <= self.n_subcarriers):
                raise ValueError(f"band [{band.lo}, {band.hi}) outside"
                                 f" [0, {self.n_subcarriers})")

    @property
    def frame_spacing_us(self) -> int:
        return round(1_000_000 / self.frame_rate_hz)


def with_noise_scaled(profile: SynthProfile, factor: float) -> SynthProfile:
    """The far-receiver analog: same pattern, noisier channel."""
    return replace(profile, noise_sigma=profile.noise_sigma * factor)


def generate_synthetic_frame(profile: SynthProfile, t_us: int) -> CsiFrame:
    """Emit the frame at absolute time t_us. Pure in (profile, t_us)."""
    n = profile.n_subcarriers
    t = t_us / 1e6
    envelope = np.ones(n)
    for band in profile.pattern_bands:
        envelope[band.lo:band.hi] += band.depth * math.sin(
            2.0 * math.pi * band.freq_hz * t)
    theta = profile.phase_slope_rad * np.arange(n)
    csi = profile.base_amplitude * envelope * np.exp(1j * theta)
    rssi = profile.rssi_mean_dbm
    if profile.noise_sigma > 0 or profile.rssi_jitter_db > 0:
        rng = np.random.default_rng((profile.rng_seed & 0xFFFFFFFFFFFFFFFF,
                                     t_us & 0xFFFFFFFFFFFFFFFF))
        if profile.noise_sigma > 0:
            csi = csi + (rng.normal(0.0, profile.noise_sigma, n)
                         + 1j * rng.normal(0.0, profile.noise_sigma, n))
        if profile.rssi_jitter_db > 0:
            rssi += rng.uniform(-profile.rssi_jitter_db, profile.rssi_jitter_db)
    idx = round(t_us * profile.frame_rate_hz / 1e6)
    return CsiFrame(
        timestamp_us=t_us,
        source_mac=profile.source_mac,
        seq=idx & 0xFFFF,
        rssi_dbm=min(0, max(-120, round(rssi))),
        bandwidth_mhz=N_TO_BANDWIDTH[n],
        subcarrier_order=SubcarrierOrder.FFT,
        csi=csi,
    )


def _mac_for_class(class_id: int) -> bytes:
    return bytes([0x02, 0xC5, 0x10, 0x00, 0x00, class_id & 0xFF])


def builtin_profiles(seed: int = 1) -> dict[str, SynthProfile]:
    """The four shipped activity patterns: a quiet channel plus three with
    disjoint modulation bands. Band placement avoids the 20 MHz null set."""
    common = dict(n_subcarriers=64, frame_rate_hz=9.0, base_amplitude=100.0,
                  noise_sigma=20.0, rssi_mean_dbm=-55.0, rssi_jitter_db=0.5,
                  rng_seed=seed)
    return {
        "idle": SynthProfile(name="idle", class_id=0,
                             source_mac=_mac_for_class(0), **common),
        "pattern-a": SynthProfile(
            name="pattern-a", class_id=1, source_mac=_mac_for_class(1),
            pattern_bands=(PatternBand(4, 12, 1.2, 0.8),), **common),
        "pattern-b": SynthProfile(
            name="pattern-b", class_id=2, source_mac=_mac_for_class(2),
            pattern_bands=(PatternBand(14, 22, 2.0, 0.8),), **common),
        "pattern-c": SynthProfile(
            name="pattern-c", class_id=3, source_mac=_mac_for_class(3),
            pattern_bands=(PatternBand(40, 48, 3.0, 0.8),), **common),
    }


class SourceHandle:
    """Base stream handle. One producer, one consumer; frames are immutable."""

    def __init__(self):
        self.closed = False
        self.parse_errors = 0
        self.dropped = 0

    def next_frame(self, timeout: float | None = None) -> CsiFrame | None:
        """Next frame; None on timeout (stream stays open); raises
        EndOfStream when the source is exhausted."""
        raise NotImplementedError

    def close(self):
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def __iter__(self) -> Iterator[CsiFrame]:
        while True:
            try:
                frame = self.next_frame()
            except EndOfStream:
                return
            if frame is not None:
                yield frame


class SynthSource(SourceHandle):
    def __init__(self, profile: SynthProfile, *, realtime: bool = False,
                 max_frames: int | None = None):
        super().__init__()
        self.profile = profile
        self.realtime = realtime
        self.max_frames = max_frames
        self._index = 0
        self._t0 = time.monotonic()

    def next_frame(self, timeout: float | None = None) -> CsiFrame | None:
        if self.closed:
            raise SourceClosed("synth source closed")
        if self.max_frames is not None and self._index >= self.max_frames:
            raise EndOfStream
        t_us = self._index * self.profile.frame_spacing_us
        if self.realtime:
            due = self._t0 + t_us / 1e6
            delay = due - time.monotonic()
            if delay > 0:
                if timeout is not None and delay > timeout:
                    time.sleep(timeout)
                    return None
                time.sleep(delay)
        frame = generate_synthetic_frame(self.profile, t_us)
        self._index += 1
        return frame


class PcapSource(SourceHandle):
    """Replays a capture in file order with original timestamps; an optional
    fixed rate paces emission without touching the timestamps."""

    def __init__(self, path: str, *, rate_hz: float | None = None,
                 layout: IngestLayout = DEFAULT_INGEST_LAYOUT,
                 port: int | None = None, payload_format: str = "nexmon"):
        super().__init__()
        self._file = open(path, "rb")
        try:
            self._reader = read_pcap_stream(
                self._file, layout=layout,
                port=port if port is not None else default_udp_port(),
                payload_format=payload_format)
        except Exception:
            self._file.close()
            raise
        self._rate = rate_hz
        self._next_due = time.monotonic()

    def next_frame(self, timeout: float | None = None) -> CsiFrame | None:
        if self.closed:
            raise SourceClosed("pcap source closed")
        if self._rate:
            delay = self._next_due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            self._next_due += 1.0 / self._rate
        try:
            frame = next(self._reader)
        except StopIteration:
            self.parse_errors = self._reader.parse_errors
            raise EndOfStream from None
        self.parse_errors = self._reader.parse_errors
        return frame

    def close(self):
        if not self.closed:
            self._file.close()
        super().close()


class UdpSource(SourceHandle):
    """Bound UDP listener feeding a bounded queue of 1024 frames.

    On overflow the oldest frame is dropped and counted; for live viewing
    freshness beats completeness.
    """

    QUEUE_DEPTH = 1024

    def __init__(self, host: str, port: int, *, payload_format: str = "wef1",
                 layout: IngestLayout = DEFAULT_INGEST_LAYOUT):
        super().__init__()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._sock.bind((host, port))
        except OSError as exc:
            self._sock.close()
            raise BindFailed(f"udp://{host}:{port}: {exc}") from exc
        self._sock.settimeout(0.2)
        self._payload_format = payload_format
        self._layout = layout
        self._frames: queue.Queue[CsiFrame] = queue.Queue()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._recv_loop, daemon=True,
                                        name="csiscope-udp")
        self._thread.start()

    def _recv_loop(self):
        while not self._stop.is_set():
            try:
                data, _addr = self._sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                if self._payload_format == "nexmon":
                    frame = parse_nexmon_payload(
                        data, self._layout,
                        timestamp_us=time.time_ns() // 1000)
                else:
                    frame = parse_wire_frame(data)
                if not validate_frame(frame).ok:
                    raise CsiScopeError("invalid frame")
            except (CsiScopeError, struct.error):
                self.parse_errors += 1
                continue
            with self._lock:
                if self._frames.qsize() >= self.QUEUE_DEPTH:
                    try:
                        self._frames.get_nowait()
                        self.dropped += 1
                    except queue.Empty:
                        pass
                self._frames.put(frame)

    def next_frame(self, timeout: float | None = None) -> CsiFrame | None:
        if self.closed:
            raise SourceClosed("udp source closed")
        try:
            return self._frames.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        if not self.closed:
            self._stop.set()
            self._sock.close()
            self._thread.join(timeout=2.0)
        super().close()


def open_source(uri: str | SourceUri,
                profiles: dict[str, SynthProfile] | None = None) -> SourceHandle:
    """Open a frame source from its URI. See the module docstring for syntax."""
    if isinstance(uri, str):
        uri = parse_source_uri(uri)
    if uri.scheme == "synth":
        table = profiles if profiles is not None else builtin_profiles()
        profile = table.get(uri.target)
        if profile is None:
            raise UnknownProfile(f"synth://{uri.target}; available:"
                                 f" {sorted(table)}")
        if "seed" in uri.params:
            profile = replace(profile, rng_seed=int(uri.params["seed"]))
        if uri.rate_hz:
            profile = replace(profile, frame_rate_hz=uri.rate_hz)
        realtime = uri.params.get("mode", "realtime") != "offline"
        max_frames = (int(uri.params["frames"])
                      if "frames" in uri.params else None)
        return SynthSource(profile, realtime=realtime, max_frames=max_frames)
    if uri.scheme == "pcap":
        if not os.path.isfile(uri.target):
            raise FileNotFoundError(uri.target)
        return PcapSource(uri.target, rate_hz=uri.rate_hz,
                          payload_format=uri.params.get("fmt", "nexmon"),
                          port=(int(uri.params["port"])
                                if "port" in uri.params else None))
    # udp
    host, sep, port_text = uri.target.rpartition(":")
    if not sep:
        host, port = uri.target, default_udp_port()
    else:
        try:
            port = int(port_text)
        except ValueError as exc:
            raise BadUri(f"bad port in udp://{uri.target}") from exc
    return UdpSource(host, port, payload_format=uri.params.get("fmt", "wef1"))
