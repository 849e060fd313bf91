// Bridge websocket protocol: JSON envelopes with op/topic/seq/stamp/msg.
// The occupancy map arrives as chunked snapshots sharing a revision number;
// only a complete chunk set of the newest revision is handed to the scene.

export const TOPIC_OCCUPANCY = "/occupancy_map";
export const TOPIC_ODOMETRY = "/odometry";
export const TOPIC_TRAJECTORY = "/trajectory";
export const TOPIC_STATUS = "/mission_status";
export const TOPIC_TARGET = "/target";
export const TOPIC_MESH = "/mesh_map";

export const SERVER_TOPICS = [
  TOPIC_OCCUPANCY,
  TOPIC_ODOMETRY,
  TOPIC_TRAJECTORY,
  TOPIC_STATUS,
  TOPIC_MESH,
] as const;

export interface Envelope {
  op: "publish" | "subscribe" | "unsubscribe" | "error";
  topic?: string;
  seq?: number;
  stamp?: number;
  msg?: unknown;
  code?: string;
  detail?: string;
}

export interface MapChunk {
  resolution: number;
  revision: number;
  chunk_index: number;
  chunk_count: number;
  voxels: number[]; // flat (x, y, z) voxel index triples
}

export interface OdometryMsg {
  position: [number, number, number];
  yaw: number;
  stamp: number;
}

export interface TrajectoryMsg {
  waypoints: number[]; // flat triples
  timestamps: number[];
  total_length: number;
}

export interface StatusMsg {
  state: string;
  active_target: [number, number, number] | null;
  progress: number;
}

export function parseEnvelope(raw: string): Envelope {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (e) {
    throw new Error(`unparseable envelope: ${e}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("envelope must be a JSON object");
  }
  const env = doc as Envelope;
  if (env.op !== "publish" && env.op !== "error") {
    throw new Error(`unexpected op from server: ${String(env.op)}`);
  }
  return env;
}

export function subscribeText(topic: string): string {
  return JSON.stringify({ op: "subscribe", topic });
}

export function targetText(position: [number, number, number], seq: number, clientId: string): string {
  return JSON.stringify({
    op: "publish",
    topic: TOPIC_TARGET,
    msg: { position, seq, client_id: clientId },
  });
}

export interface AssembledMap {
  resolution: number;
  revision: number;
  voxels: Int32Array; // flat triples, complete snapshot
}

/** Reassembles chunked snapshots; keeps only the newest complete revision. */
export class MapAssembler {
  private pending = new Map<number, { count: number; parts: Map<number, number[]>; resolution: number }>();
  private newest = -Infinity;
  latest: AssembledMap | null = null;

  /** Returns the completed snapshot when this chunk finishes one, else null. */
  offer(chunk: MapChunk): AssembledMap | null {
    if (chunk.revision < this.newest) return null; // stale revision, discard
    if (chunk.revision > this.newest) {
      this.newest = chunk.revision;
      // anything older can never complete ahead of the newest
      for (const rev of this.pending.keys()) {
        if (rev < chunk.revision) this.pending.delete(rev);
      }
    }
    let entry = this.pending.get(chunk.revision);
    if (!entry) {
      entry = { count: chunk.chunk_count, parts: new Map(), resolution: chunk.resolution };
      this.pending.set(chunk.revision, entry);
    }
    entry.parts.set(chunk.chunk_index, chunk.voxels);
    if (entry.parts.size < entry.count) return null;

    let total = 0;
    for (const part of entry.parts.values()) total += part.length;
    const flat = new Int32Array(total);
    let at = 0;
    for (let i = 0; i < entry.count; i++) {
      const part = entry.parts.get(i);
      if (!part) return null; // duplicate index filled the size check; wait
      flat.set(part, at);
      at += part.length;
    }
    this.pending.delete(chunk.revision);
    this.latest = { resolution: entry.resolution, revision: chunk.revision, voxels: flat };
    return this.latest;
  }
}

// Height gradient shared with the server's mesh colors.
export const COLOR_GROUND: [number, number, number] = [0.12, 0.35, 0.9];
export const COLOR_TOP: [number, number, number] = [0.95, 0.3, 0.1];

export function heightColor(
  zIndex: number,
  resolution: number,
  zMin: number,
  zMax: number,
): [number, number, number] {
  const z = (zIndex + 0.5) * resolution;
  const f = Math.min(1, Math.max(0, (z - zMin) / (zMax - zMin)));
  return [
    COLOR_GROUND[0] + f * (COLOR_TOP[0] - COLOR_GROUND[0]),
    COLOR_GROUND[1] + f * (COLOR_TOP[1] - COLOR_GROUND[1]),
    COLOR_GROUND[2] + f * (COLOR_TOP[2] - COLOR_GROUND[2]),
  ];
}
