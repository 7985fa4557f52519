"""Command line entry points.

    csiscope serve  --source synth://pattern-a --listen 127.0.0.1:8089
    csiscope record --source pcap://cap.pcap --format binary --out out.bin
    csiscope replay --in cap.pcap --to 127.0.0.1:5500 --rate 9
    csiscope eval   --model model.json --data recordings/
"""

from __future__ import annotations

import argparse
import socket
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .centroid import (
    CentroidModel,
    classify_window,
    evaluate_fscore,
    window_features_from_matrix,
)
from .codec import encode_wire_frame, quantize_for_wire
from .errors import CsiScopeError, EndOfStream
from .pipeline import PipelineState, default_chain, load_chain, run_chain
from .recording import open_recording, read_recording
from .server import Session, serve
from .source import open_source


def _add_chain_arg(sub):
    sub.add_argument("--chain", help="plugin chain JSON file"
                                     " (default: the built-in workflow)")


def _chain_from_args(args):
    return load_chain(args.chain) if args.chain else default_chain()


def _cmd_serve(args) -> int:
    host, _, port = args.listen.rpartition(":")
    session = Session(open_source(args.source), _chain_from_args(args),
                      stats_interval=args.stats_interval)
    serve(session, host or "127.0.0.1", int(port), static_dir=args.static)
    return 0


def _cmd_record(args) -> int:
    source = open_source(args.source)
    config = _chain_from_args(args)
    state = PipelineState()
    handle = None
    written = 0
    try:
        while args.count is None or written < args.count:
            try:
                frame = source.next_frame(timeout=args.timeout)
            except EndOfStream:
                break
            if frame is None:
                continue
            processed = run_chain(frame, config, state)
            if processed is None:
                continue
            if handle is None:
                handle = open_recording(args.out, args.format, processed.meta.n,
                                        chain_version=config.version,
                                        label=args.label)
            handle.append(processed)
            written += 1
    except KeyboardInterrupt:
        pass
    finally:
        if handle is not None:
            handle.close()
        source.close()
    print(f"{written} frames -> {args.out}")
    return 0


def _cmd_replay(args) -> int:
    dest_host, _, dest_port = args.to.rpartition(":")
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    source = open_source(f"pcap://{args.infile}"
                         + (f"?rate={args.rate}" if args.rate else ""))
    sent = 0
    try:
        for frame in source:
            sock.sendto(encode_wire_frame(quantize_for_wire(frame)),
                        (dest_host or "127.0.0.1", int(dest_port)))
            sent += 1
    except KeyboardInterrupt:
        pass
    finally:
        source.close()
        sock.close()
    print(f"{sent} frames -> udp://{args.to}")
    return 0


def _cmd_eval(args) -> int:
    model = CentroidModel.load(args.model)
    if not model.labels:
        print("model has no class labels; cannot locate recordings",
              file=sys.stderr)
        return 2
    predictions: list[int] = []
    truth: list[int] = []
    for class_id, label in enumerate(model.labels):
        path = Path(args.data) / f"{label}.csv"
        if not path.exists():
            print(f"missing recording {path}", file=sys.stderr)
            return 2
        _, frames = read_recording(str(path))
        amps = [f.amplitudes for f in frames]
        for k in range(0, len(amps) - model.window_len + 1, model.window_len):
            feats = window_features_from_matrix(
                np.stack(amps[k:k + model.window_len]), model.bands)
            predictions.append(classify_window(model, feats).class_id)
            truth.append(class_id)
    report = evaluate_fscore(predictions, truth)
    for c, scores in sorted(report.per_class.items()):
        label = model.labels[c] if c < len(model.labels) else str(c)
        print(f"class {c} ({label}): precision {scores.precision:.3f}"
              f" recall {scores.recall:.3f} f1 {scores.f1:.3f}"
              f" support {scores.support}")
    print(f"macro F-score: {report.macro_f:.4f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="csiscope",
        description="Real-time WiFi CSI sensing toolkit: capture, preprocess,"
                    " record, stream, classify.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("serve", help="run the studio backend")
    p.add_argument("--source", required=True, help="udp:// pcap:// or synth://")
    p.add_argument("--listen", default="127.0.0.1:8089")
    p.add_argument("--static", help="directory with the studio web bundle")
    p.add_argument("--stats-interval", type=int, default=50,
                   help="frames between stats envelopes (0 disables)")
    _add_chain_arg(p)
    p.set_defaults(func=_cmd_serve)

    p = subs.add_parser("record", help="record processed frames to a file")
    p.add_argument("--source", required=True)
    p.add_argument("--format", default="binary",
                   choices=("csv-simple", "csv-compact", "binary"))
    p.add_argument("--out", required=True)
    p.add_argument("--label", help="activity label for this recording")
    p.add_argument("--count", type=int, help="stop after this many frames")
    p.add_argument("--timeout", type=float, default=1.0)
    _add_chain_arg(p)
    p.set_defaults(func=_cmd_record)

    p = subs.add_parser("replay", help="replay a pcap as WEF1 UDP datagrams")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--to", default="127.0.0.1:5500")
    p.add_argument("--rate", type=float, help="frames per second")
    p.set_defaults(func=_cmd_replay)

    p = subs.add_parser("eval", help="score a centroid model on recordings")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True,
                   help="directory containing <label>.csv per class")
    p.set_defaults(func=_cmd_eval)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CsiScopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
