// Envelope types mirroring the server's JSON stream protocol (one envelope
// per WebSocket text message), plus an ordering guard: rendering consumes
// envelopes strictly in sequence-number order per kind.

export interface PluginConfig {
  id: string;
  priority: number;
  enabled: boolean;
  params: Record<string, number | string | boolean>;
}

export interface ViewRange {
  lo: number;
  hi: number;
}

export interface FrameEnvelope {
  kind: "frame";
  seq: number;
  t_us: number;
  mac: string;
  rssi: number;
  rssi_smoothed: number;
  n: number;
  order: string;
  amplitudes: number[];
  phases: number[];
  applied: string[];
}

export interface ClassificationEnvelope {
  kind: "classification";
  seq: number;
  class_id: number;
  confidence: number;
  window_end_us: number;
}

export interface ConfigEnvelope {
  kind: "config";
  seq: number;
  version: number;
  chain: PluginConfig[];
  view: ViewRange;
}

export interface StatsEnvelope {
  kind: "stats";
  seq: number;
  frames_in: number;
  frames_out: number;
  frames_dropped: number;
  source_parse_errors: number;
  source_dropped: number;
  chain_errors: number;
  client_drops: Record<string, number>;
  recording: boolean;
  bridge_alive: boolean;
  bridge_malformed: number;
}

export interface AckEnvelope {
  kind: "ack";
  seq: number;
  cmd: string;
  ok: true;
  version: number;
  [extra: string]: unknown;
}

export interface ErrorEnvelope {
  kind: "error";
  seq: number;
  cmd?: string;
  error: string;
  detail?: string;
}

export type Envelope =
  | FrameEnvelope
  | ClassificationEnvelope
  | ConfigEnvelope
  | StatsEnvelope
  | AckEnvelope
  | ErrorEnvelope;

const KINDS = new Set([
  "frame", "classification", "config", "stats", "ack", "error",
]);

export function parseEnvelope(text: string): Envelope {
  const doc = JSON.parse(text);
  if (typeof doc !== "object" || doc === null || !KINDS.has(doc.kind)) {
    throw new Error(`not an envelope: ${text.slice(0, 60)}`);
  }
  if (typeof doc.seq !== "number") {
    throw new Error("envelope without seq");
  }
  return doc as Envelope;
}

/**
 * Orders consumption per kind. The transport already delivers in order; this
 * guard drops duplicates or stale envelopes (seq not above the last one seen
 * for that kind) so rendering can assume strict per-kind monotonicity, and
 * it surfaces the server-side drop gaps for the gap renderer.
 */
export class EnvelopeStream {
  private lastSeqByKind = new Map<string, number>();
  private lastSeq = 0;
  /** total envelopes the server dropped before they reached us */
  gaps = 0;

  accept(env: Envelope): boolean {
    const prevKind = this.lastSeqByKind.get(env.kind) ?? 0;
    if (env.seq <= prevKind) {
      return false;
    }
    if (env.seq > this.lastSeq + 1) {
      this.gaps += env.seq - this.lastSeq - 1;
    }
    this.lastSeq = Math.max(this.lastSeq, env.seq);
    this.lastSeqByKind.set(env.kind, env.seq);
    return true;
  }
}
