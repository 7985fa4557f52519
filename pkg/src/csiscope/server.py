"""Session orchestration and the studio-facing stream protocol.

One session runs source -> pipeline and fans processed frames out to the
recorder, the classifier bridge, and every connected client. Clients receive
JSON envelopes; control commands mutate session state atomically between
frames and are acknowledged with the new config version.

Envelope kinds: frame, classification, config, stats, ack, error. Every
envelope carries ``seq``, a per-client strictly increasing sequence number;
gaps are impossible by construction, but a slow client's buffer drops
oldest-first and the drop count shows up in its stats.

Transport is a WebSocket at ``/ws`` carrying one JSON envelope per text
message, so browser clients need no decoding layer.
"""

from __future__ import annotations

import collections
import json
import queue
import threading
import time
from typing import Callable, Mapping

from .bridge import BridgeHandle, poll_results, send_frame, spawn_classifier
from .errors import CsiScopeError, EndOfStream, UnknownCommand
from .model import ProcessedFrame, format_mac, parse_mac
from .pipeline import (
    ChainConfig,
    PipelineState,
    chain_to_json,
    default_chain,
    run_chain,
    update_chain,
    validate_chain,
)
from .recording import QueuedRecorder, open_recording
from .source import SourceHandle, open_source

DEFAULT_CLIENT_BUFFER = 256
DEFAULT_STATS_INTERVAL = 0  # frames between automatic stats envelopes; 0 = off


class ClientBuffer:
    """Per-client outgoing envelope buffer with a drop-oldest policy, so one
    slow client never stalls the others."""

    def __init__(self, client_id: str, capacity: int = DEFAULT_CLIENT_BUFFER):
        self.client_id = client_id
        self.capacity = capacity
        self.dropped = 0
        self.frame_stride = 1  # negotiated downsampling: every k-th frame
        self._frames_seen = 0
        self._seq = 0
        self._deque: collections.deque = collections.deque()
        self._lock = threading.Lock()

    def offer_frame(self, payload: dict) -> None:
        """Push a frame envelope subject to this client's stride."""
        with self._lock:
            self._frames_seen += 1
            if (self._frames_seen - 1) % self.frame_stride:
                return
        self.push(payload)

    def push(self, payload: dict) -> None:
        with self._lock:
            self._seq += 1
            envelope = dict(payload)
            envelope["seq"] = self._seq
            if len(self._deque) >= self.capacity:
                self._deque.popleft()
                self.dropped += 1
            self._deque.append(envelope)

    def drain(self, limit: int | None = None) -> list[dict]:
        with self._lock:
            if limit is None:
                out = list(self._deque)
                self._deque.clear()
            else:
                out = [self._deque.popleft()
                       for _ in range(min(limit, len(self._deque)))]
            return out


def _frame_envelope(p: ProcessedFrame) -> dict:
    return {
        "kind": "frame",
        "t_us": p.meta.timestamp_us,
        "mac": format_mac(p.meta.source_mac),
        "rssi": p.meta.rssi_dbm,
        "rssi_smoothed": p.rssi_smoothed_dbm,
        "n": p.meta.n,
        "order": p.meta.subcarrier_order.value,
        "amplitudes": p.amplitudes.tolist(),
        "phases": p.phases.tolist(),
        "applied": list(p.applied_plugins),
    }


class Session:
    """State and behaviour of one capture/processing session.

    Transport-independent: the WebSocket layer feeds ``command_queue`` and
    drains the client buffers; tests can drive it directly.
    """

    def __init__(self, source: SourceHandle | None = None,
                 config: ChainConfig | None = None, *,
                 stats_interval: int = DEFAULT_STATS_INTERVAL,
                 include_phases_to_bridge: bool = False):
        self.source = source
        self.config = config if config is not None else default_chain()
        validate_chain(self.config)
        self.state = PipelineState()
        self.recorder: QueuedRecorder | None = None
        self.bridge: BridgeHandle | None = None
        self.clients: dict[str, ClientBuffer] = {}
        self.view_range = {"lo": 0.0, "hi": 1.0}
        self.stats_interval = stats_interval
        self.include_phases_to_bridge = include_phases_to_bridge
        self.command_queue: queue.Queue = queue.Queue()
        self.chain_errors = 0
        self.bridge_send_errors = 0
        self._frames_broadcast = 0
        self._lock = threading.Lock()

    # --- clients ---

    def add_client(self, client_id: str,
                   capacity: int = DEFAULT_CLIENT_BUFFER) -> ClientBuffer:
        buf = ClientBuffer(client_id, capacity)
        with self._lock:
            self.clients[client_id] = buf
        buf.push(self._config_envelope())
        return buf

    def remove_client(self, client_id: str) -> None:
        with self._lock:
            self.clients.pop(client_id, None)

    def _broadcast(self, payload: dict) -> None:
        with self._lock:
            targets = list(self.clients.values())
        for buf in targets:
            buf.push(payload)

    # --- envelopes ---

    def _config_envelope(self) -> dict:
        return {"kind": "config", "version": self.config.version,
                "chain": chain_to_json(self.config)["plugins"],
                "view": dict(self.view_range)}

    def _stats_envelope(self) -> dict:
        with self._lock:
            client_drops = {cid: buf.dropped
                            for cid, buf in self.clients.items()}
        return {
            "kind": "stats",
            "frames_in": self.state.frames_in,
            "frames_out": self.state.frames_out,
            "frames_dropped": self.state.frames_dropped,
            "source_parse_errors": (self.source.parse_errors
                                    if self.source else 0),
            "source_dropped": self.source.dropped if self.source else 0,
            "chain_errors": self.chain_errors,
            "client_drops": client_drops,
            "recording": self.recorder is not None,
            "bridge_alive": bool(self.bridge and self.bridge.alive),
            "bridge_malformed": self.bridge.malformed if self.bridge else 0,
        }

    # --- control ---

    def handle_control(self, msg: Mapping, reply_to: str | None = None) -> dict:
        """Apply one control command; returns the ack (or error) envelope.

        The ack goes to the issuing client first, then the new configuration
        is broadcast to every client, so within the issuer's stream the ack's
        version always matches the next config envelope.
        """
        cmd = str(msg.get("cmd", ""))
        if cmd == "set_downsample" and reply_to is not None:
            msg = {**msg, "client": reply_to}
        try:
            handler = self._COMMANDS.get(cmd)
            if handler is None:
                raise UnknownCommand(cmd or "<missing cmd>")
            detail = handler(self, msg)
        except (CsiScopeError, ValueError, OSError) as exc:
            error = {"kind": "error", "cmd": cmd,
                     "error": _error_code(exc), "detail": str(exc)}
            self._push_to(reply_to, error)
            return error
        ack = {"kind": "ack", "cmd": cmd, "ok": True,
               "version": self.config.version}
        if detail:
            ack.update(detail)
        self._push_to(reply_to, ack)
        if cmd in ("set_plugin", "set_mac_filter", "set_view_range"):
            self._broadcast(self._config_envelope())
        return ack

    def _push_to(self, client_id: str | None, payload: dict) -> None:
        if client_id is None:
            return
        with self._lock:
            buf = self.clients.get(client_id)
        if buf is not None:
            buf.push(payload)

    def _apply_chain_commands(self, commands: list[dict]) -> None:
        new = self.config
        for command in commands:
            new = update_chain(new, command)
        validate_chain(new)
        self.config = new

    def _cmd_set_plugin(self, msg: Mapping) -> dict | None:
        pid = str(msg.get("id", ""))
        commands: list[dict] = []
        if "enabled" in msg:
            commands.append({"op": "enable" if msg["enabled"] else "disable",
                             "id": pid})
        if "priority" in msg:
            commands.append({"op": "set-priority", "id": pid,
                             "priority": msg["priority"]})
        for key, value in dict(msg.get("params", {})).items():
            commands.append({"op": "set-param", "id": pid,
                             "key": key, "value": value})
        if not commands:
            raise UnknownCommand("set_plugin with nothing to change")
        self._apply_chain_commands(commands)
        return None

    def _cmd_set_mac_filter(self, msg: Mapping) -> dict | None:
        macs = [str(m) for m in msg.get("allowlist", [])]
        for m in macs:
            parse_mac(m)  # validate early; raises ValueError on junk
        allowlist = ",".join(macs)
        commands = [{"op": "set-param", "id": "mac-filter",
                     "key": "allowlist", "value": allowlist},
                    {"op": "enable", "id": "mac-filter"}]
        self._apply_chain_commands(commands)
        return None

    def _cmd_set_source(self, msg: Mapping) -> dict | None:
        uri = str(msg.get("uri", ""))
        new_source = open_source(uri)
        if self.source is not None:
            self.source.close()
        self.source = new_source
        return {"source": uri}

    def _cmd_start_record(self, msg: Mapping) -> dict | None:
        if self.recorder is not None:
            raise CsiScopeError("already-recording")
        path = str(msg.get("path", ""))
        fmt = str(msg.get("format", "binary"))
        n = int(msg.get("n", 64))
        handle = open_recording(path, fmt, n,
                                started_us=time.time_ns() // 1000,
                                chain_version=self.config.version,
                                label=msg.get("label"))
        self.recorder = QueuedRecorder(handle)
        return {"path": path, "format": fmt}

    def _cmd_stop_record(self, msg: Mapping) -> dict | None:
        if self.recorder is None:
            raise CsiScopeError("not-recording")
        recorder = self.recorder
        self.recorder = None
        recorder.close()  # drains the queue fully before the handle closes
        return {"frames_written": recorder.handle.frames_written}

    def _cmd_spawn_classifier(self, msg: Mapping) -> dict | None:
        if self.bridge is not None and self.bridge.alive:
            raise CsiScopeError("classifier-already-running")
        argv = [str(a) for a in msg.get("argv", [])]
        if not argv:
            raise UnknownCommand("spawn_classifier needs argv")
        self.bridge = spawn_classifier(argv[0], argv[1:])
        return {"pid": self.bridge.pid}

    def _cmd_kill_classifier(self, msg: Mapping) -> dict | None:
        if self.bridge is None:
            raise CsiScopeError("no-classifier")
        self.bridge.close()
        self.bridge = None
        return None

    def _cmd_set_view_range(self, msg: Mapping) -> dict | None:
        lo = float(msg.get("lo", 0.0))
        hi = float(msg.get("hi", 0.0))
        if not lo < hi:
            raise CsiScopeError(f"view range needs lo < hi, got [{lo}, {hi}]")
        self.view_range = {"lo": lo, "hi": hi}
        return None

    def _cmd_get_stats(self, msg: Mapping) -> dict | None:
        self._broadcast(self._stats_envelope())
        return None

    def _cmd_set_downsample(self, msg: Mapping) -> dict | None:
        k = int(msg.get("k", 1))
        if k < 1:
            raise CsiScopeError(f"downsample stride must be >= 1, got {k}")
        client_id = msg.get("client")
        with self._lock:
            buf = self.clients.get(client_id)
        if buf is None:
            raise UnknownCommand(f"no client {client_id!r} to downsample")
        buf.frame_stride = k
        return {"k": k}

    _COMMANDS: dict[str, Callable] = {
        "set_plugin": _cmd_set_plugin,
        "set_mac_filter": _cmd_set_mac_filter,
        "set_source": _cmd_set_source,
        "start_record": _cmd_start_record,
        "stop_record": _cmd_stop_record,
        "spawn_classifier": _cmd_spawn_classifier,
        "kill_classifier": _cmd_kill_classifier,
        "set_view_range": _cmd_set_view_range,
        "get_stats": _cmd_get_stats,
        "set_downsample": _cmd_set_downsample,
    }

    # --- frame flow ---

    def broadcast_frame(self, p: ProcessedFrame) -> None:
        envelope = _frame_envelope(p)
        with self._lock:
            targets = list(self.clients.values())
        for buf in targets:
            buf.offer_frame(envelope)
        self._frames_broadcast += 1
        if self.stats_interval and self._frames_broadcast % self.stats_interval == 0:
            self._broadcast(self._stats_envelope())

    def broadcast_classification(self, r) -> None:
        self._broadcast({"kind": "classification", "class_id": r.class_id,
                         "confidence": r.confidence,
                         "window_end_us": r.window_end_us})

    def process_commands(self) -> int:
        """Drain queued (client_id, message) control commands; responses go
        to the issuing client's buffer."""
        handled = 0
        while True:
            try:
                client_id, msg = self.command_queue.get_nowait()
            except queue.Empty:
                return handled
            self.handle_control(msg, reply_to=client_id)
            handled += 1

    def process_one_frame(self, timeout: float | None = 0.05) -> bool:
        """Pull one frame from the source through the chain and fan it out.
        Returns False on timeout or when the frame was dropped/errored."""
        if self.source is None:
            return False
        frame = self.source.next_frame(timeout)
        if frame is None:
            return False
        try:
            processed = run_chain(frame, self.config, self.state)
        except CsiScopeError:
            self.chain_errors += 1
            return False
        if processed is None:
            return False
        self.broadcast_frame(processed)
        if self.recorder is not None:
            self.recorder.append(processed)
        if self.bridge is not None and self.bridge.alive:
            try:
                send_frame(self.bridge, processed,
                           include_phases=self.include_phases_to_bridge)
            except BrokenPipeError:
                self.bridge_send_errors += 1
        return True

    def poll_bridge(self) -> int:
        """Forward any pending classifier results; classifications flow even
        when no frames are (results can outlive or precede the stream)."""
        if self.bridge is None:
            return 0
        results = poll_results(self.bridge)
        for result in results:
            self.broadcast_classification(result)
        return len(results)

    def step(self, timeout: float | None = 0.05) -> bool:
        """One scheduler turn: commands first (frame-boundary semantics),
        then at most one frame, then any classifier results."""
        self.process_commands()
        try:
            progressed = self.process_one_frame(timeout)
        finally:
            self.poll_bridge()
        return progressed

    def run(self, stop: threading.Event, timeout: float = 0.05) -> None:
        while not stop.is_set():
            try:
                self.step(timeout)
            except EndOfStream:
                break
        self.close()

    def close(self) -> None:
        """Tear down in order: recorder flushed fully, bridge child reaped,
        source closed. Safe to call twice."""
        if self.recorder is not None:
            self.recorder.close()
            self.recorder = None
        if self.bridge is not None:
            self.bridge.close()
            self.bridge = None
        if self.source is not None:
            self.source.close()


def _error_code(exc: CsiScopeError) -> str:
    text = str(exc)
    if text in ("already-recording", "not-recording", "no-classifier",
                "classifier-already-running"):
        return text
    return type(exc).__name__


# --- WebSocket transport (aiohttp) ---

def build_app(session: Session, *, static_dir: str | None = None):
    """aiohttp application exposing the session at /ws, plus the studio
    bundle when a build directory is supplied."""
    import asyncio

    from aiohttp import WSMsgType, web

    async def ws_handler(request):
        ws = web.WebSocketResponse(heartbeat=30.0)
        await ws.prepare(request)
        client_id = f"client-{id(ws):x}"
        buf = session.add_client(client_id)

        async def pump():
            try:
                while not ws.closed:
                    for envelope in buf.drain():
                        await ws.send_str(json.dumps(envelope))
                    await asyncio.sleep(0.01)
            except ConnectionError:
                pass

        pump_task = asyncio.create_task(pump())
        try:
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    try:
                        doc = json.loads(msg.data)
                    except json.JSONDecodeError:
                        buf.push({"kind": "error", "error": "bad-json",
                                  "detail": msg.data[:80]})
                        continue
                    session.command_queue.put((client_id, doc))
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            pump_task.cancel()
            session.remove_client(client_id)
        return ws

    app = web.Application()
    app.router.add_get("/ws", ws_handler)
    if static_dir:
        app.router.add_static("/", static_dir, show_index=True)
    return app


def serve(session: Session, host: str = "127.0.0.1", port: int = 8089, *,
          static_dir: str | None = None) -> None:
    """Run the session thread plus the WebSocket server until interrupted."""
    from aiohttp import web

    stop = threading.Event()
    worker = threading.Thread(target=session.run, args=(stop,), daemon=True,
                              name="csiscope-session")
    worker.start()
    try:
        web.run_app(build_app(session, static_dir=static_dir),
                    host=host, port=port, print=None)
    finally:
        stop.set()
        worker.join(timeout=5.0)
