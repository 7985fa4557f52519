// WebSocket client for the studio: feeds envelopes through the ordering
// guard, tracks config/MAC/stats state, and matches command acks to the
// promises that issued them. The UI never mutates pipeline state directly;
// everything goes through control messages, and the displayed config version
// always comes from server envelopes.

import {
  type AckEnvelope,
  type ConfigEnvelope,
  type Envelope,
  type ErrorEnvelope,
  EnvelopeStream,
  parseEnvelope,
} from "./protocol.js";

/** Structural subset shared by the browser WebSocket and the `ws` package. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "message",
                   listener: (event: { data: unknown }) => void): void;
  addEventListener(type: "close" | "open" | "error",
                   listener: () => void): void;
}

export interface Handlers {
  onEnvelope?: (env: Envelope) => void;
  onClose?: () => void;
}

interface PendingCommand {
  cmd: string;
  resolve: (env: AckEnvelope | ErrorEnvelope) => void;
}

export class StudioClient {
  readonly stream = new EnvelopeStream();
  config: ConfigEnvelope | null = null;
  /** live per-MAC frame counters for the discovery list */
  readonly macCounters = new Map<string, number>();
  framesSeen = 0;
  private pending: PendingCommand[] = [];

  constructor(private socket: SocketLike, private handlers: Handlers = {}) {
    socket.addEventListener("message", (event) => {
      this.handleMessage(String(event.data));
    });
    socket.addEventListener("close", () => {
      const orphans = this.pending;
      this.pending = [];
      for (const p of orphans) {
        p.resolve({ kind: "error", seq: 0, cmd: p.cmd,
                    error: "connection-closed" });
      }
      this.handlers.onClose?.();
    });
  }

  handleMessage(text: string): void {
    let env: Envelope;
    try {
      env = parseEnvelope(text);
    } catch {
      return; // not an envelope; ignore
    }
    if (!this.stream.accept(env)) {
      return;
    }
    switch (env.kind) {
      case "config":
        this.config = env;
        break;
      case "frame":
        this.framesSeen += 1;
        this.macCounters.set(env.mac, (this.macCounters.get(env.mac) ?? 0) + 1);
        break;
      case "ack":
      case "error": {
        const idx = this.pending.findIndex((p) => p.cmd === (env.cmd ?? ""));
        if (idx >= 0) {
          const [p] = this.pending.splice(idx, 1);
          p.resolve(env);
        }
        break;
      }
      default:
        break;
    }
    this.handlers.onEnvelope?.(env);
  }

  /** Send one control command; resolves with its ack or error envelope. */
  command(msg: { cmd: string } & Record<string, unknown>,
          timeoutMs = 5000): Promise<AckEnvelope | ErrorEnvelope> {
    return new Promise((resolve) => {
      const entry: PendingCommand = { cmd: msg.cmd, resolve };
      this.pending.push(entry);
      const timer = setTimeout(() => {
        const idx = this.pending.indexOf(entry);
        if (idx >= 0) {
          this.pending.splice(idx, 1);
          resolve({ kind: "error", seq: 0, cmd: msg.cmd, error: "timeout" });
        }
      }, timeoutMs);
      entry.resolve = (env) => {
        clearTimeout(timer);
        resolve(env);
      };
      this.socket.send(JSON.stringify(msg));
    });
  }

  setPlugin(id: string, patch: { enabled?: boolean; priority?: number;
                                 params?: Record<string, unknown> }) {
    return this.command({ cmd: "set_plugin", id, ...patch });
  }

  setMacFilter(allowlist: string[]) {
    return this.command({ cmd: "set_mac_filter", allowlist });
  }

  setViewRange(lo: number, hi: number) {
    return this.command({ cmd: "set_view_range", lo, hi });
  }

  startRecord(path: string, format: string, label?: string) {
    return this.command({ cmd: "start_record", path, format, label });
  }

  stopRecord() {
    return this.command({ cmd: "stop_record" });
  }

  spawnClassifier(argv: string[]) {
    return this.command({ cmd: "spawn_classifier", argv });
  }

  killClassifier() {
    return this.command({ cmd: "kill_classifier" });
  }

  requestStats() {
    return this.command({ cmd: "get_stats" });
  }

  close(): void {
    this.socket.close();
  }
}
