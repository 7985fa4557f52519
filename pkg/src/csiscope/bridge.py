"""Bridge to an external classifier process.

The session launches an arbitrary executable, streams processed frames to its
standard input as text lines, and imports classifications from its standard
output. Line-oriented text was chosen so literally any ML stack can sit on
the other side.

    host -> child:  F,<timestamp_us>,<mac 12-hex>,<rssi float>,<a_0>,...,<a_{N-1}>
                    (phases appended after the amplitudes when configured)
    child -> host:  R,<class_id>,<confidence>,<window_end_us>

Floats travel as ``repr`` output, so a Python child parses back the exact
values the host computed. Malformed child output is counted and skipped;
fuzzing the child never brings the session down.
"""

from __future__ import annotations

import subprocess
import threading
from typing import Sequence

from .errors import SpawnFailed
from .model import ClassificationResult, ProcessedFrame, format_mac_compact


class BridgeHandle:
    """One running classifier child with its reader thread and counters."""

    def __init__(self, argv: Sequence[str]):
        try:
            self._proc = subprocess.Popen(
                list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL)
        except (FileNotFoundError, PermissionError, OSError) as exc:
            raise SpawnFailed(f"{argv!r}: {exc}") from exc
        self.argv = tuple(argv)
        self.frames_sent = 0
        self.results_received = 0
        self.malformed = 0
        self._broken = False
        self._buf = bytearray()
        self._lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True,
                                        name="csiscope-bridge-reader")
        self._reader.start()

    @property
    def pid(self) -> int:
        return self._proc.pid

    @property
    def alive(self) -> bool:
        return not self._broken and self._proc.poll() is None

    def _read_loop(self):
        stdout = self._proc.stdout
        while True:
            chunk = stdout.read1(65536)
            if not chunk:
                return
            with self._lock:
                self._buf.extend(chunk)

    def close(self, timeout: float = 5.0) -> int | None:
        """Close stdin, wait for the child, kill it if it lingers; reaps the
        process either way."""
        try:
            if self._proc.stdin and not self._proc.stdin.closed:
                self._proc.stdin.close()
        except OSError:
            pass
        try:
            return self._proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            return self._proc.wait()
        finally:
            self._reader.join(timeout=1.0)


def spawn_classifier(cmd: str, args: Sequence[str] = ()) -> BridgeHandle:
    """Start the classifier executable with a pipe on each end."""
    return BridgeHandle([cmd, *args])


def frame_line(p: ProcessedFrame, *, include_phases: bool = False) -> str:
    fields = ["F", str(p.meta.timestamp_us),
              format_mac_compact(p.meta.source_mac),
              repr(float(p.rssi_smoothed_dbm))]
    fields += [repr(float(a)) for a in p.amplitudes.tolist()]
    if include_phases:
        fields += [repr(float(v)) for v in p.phases.tolist()]
    return ",".join(fields)


def send_frame(handle: BridgeHandle, p: ProcessedFrame, *,
               include_phases: bool = False) -> None:
    """Write one frame line to the child; marks the handle dead and raises
    BrokenPipeError when the child has gone away."""
    if handle._broken or handle._proc.poll() is not None:
        handle._broken = True
        raise BrokenPipeError("classifier child is not running")
    line = frame_line(p, include_phases=include_phases) + "\n"
    try:
        handle._proc.stdin.write(line.encode("ascii"))
        handle._proc.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        handle._broken = True
        raise BrokenPipeError(str(exc)) from exc
    handle.frames_sent += 1


def parse_result_line(line: str) -> ClassificationResult | None:
    """None when the line is not a well-formed result."""
    parts = line.split(",")
    if len(parts) != 4 or parts[0] != "R":
        return None
    try:
        class_id = int(parts[1])
        confidence = float(parts[2])
        window_end = int(parts[3])
        return ClassificationResult(class_id, confidence, window_end)
    except ValueError:
        return None


def poll_results(handle: BridgeHandle) -> list[ClassificationResult]:
    """Drain complete output lines, non-blocking. Incomplete trailing bytes
    stay buffered for the next poll; malformed lines bump the counter."""
    with handle._lock:
        if b"\n" not in handle._buf:
            return []
        *lines, tail = handle._buf.split(b"\n")
        handle._buf = bytearray(tail)
    results = []
    for raw in lines:
        text = raw.decode("ascii", errors="replace").strip()
        if not text:
            continue
        result = parse_result_line(text)
        if result is None:
            handle.malformed += 1
        else:
            results.append(result)
    handle.results_received += len(results)
    return results
