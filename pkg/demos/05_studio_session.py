#!/usr/bin/env python3
"""Drive a studio session the way the web UI does, without a browser: add a
client buffer, stream frames, flip plugins at runtime, start a recording,
and watch the envelope flow.

For the real thing run, in one terminal

    csiscope serve --source synth://pattern-a --listen 127.0.0.1:8089

and point the frontend (frontend/README.md) at ws://127.0.0.1:8089/ws.
"""

import tempfile

from csiscope import Session, default_chain, open_source

session = Session(open_source("synth://pattern-a?mode=offline&seed=6"),
                  default_chain())
client = session.add_client("demo-client")

print("== connect: the server pushes the current config first ==")
for env in client.drain():
    print(f"  seq {env['seq']}: {env['kind']} v{env.get('version')}")

print("\n== two frames of live streaming ==")
session.step(timeout=None)
session.step(timeout=None)
for env in client.drain():
    amps = env["amplitudes"]
    print(f"  seq {env['seq']}: frame t={env['t_us']} us,"
          f" {env['n']} subcarriers,"
          f" amplitude span [{min(amps):.2e}, {max(amps):.2e}],"
          f" applied={env['applied']}")

print("\n== toggle a plugin mid-stream ==")
session.command_queue.put(("demo-client",
                           {"cmd": "set_plugin", "id": "unwrap",
                            "enabled": False}))
session.step(timeout=None)
for env in client.drain():
    line = f"  seq {env['seq']}: {env['kind']}"
    if env["kind"] == "ack":
        line += f" {env['cmd']} -> version {env['version']}"
    if env["kind"] == "frame":
        line += f" applied={env['applied']}"
    print(line)

print("\n== record three frames to disk ==")
path = tempfile.mktemp(suffix=".bin", prefix="csiscope-demo-")
session.handle_control({"cmd": "start_record", "path": path,
                        "format": "binary"})
for _ in range(3):
    session.step(timeout=None)
ack = session.handle_control({"cmd": "stop_record"})
print(f"  {ack['frames_written']} frames written to {path}")

session.handle_control({"cmd": "get_stats"})
stats = [e for e in client.drain() if e["kind"] == "stats"][-1]
print("\n== session stats ==")
for key in ("frames_in", "frames_out", "frames_dropped", "client_drops"):
    print(f"  {key}: {stats[key]}")

session.close()
print("\nsession closed: recorder flushed, no orphan processes")
