// Thin websocket client for the bridge: subscribes to every server topic,
// coalesces map chunks through MapAssembler, and publishes target commands.
// The socket constructor is injectable so the client runs under tests
// without a browser or a live server.

import {
  AssembledMap,
  Envelope,
  MapAssembler,
  MapChunk,
  OdometryMsg,
  SERVER_TOPICS,
  StatusMsg,
  TOPIC_OCCUPANCY,
  TOPIC_ODOMETRY,
  TOPIC_STATUS,
  TOPIC_TRAJECTORY,
  TrajectoryMsg,
  parseEnvelope,
  subscribeText,
  targetText,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientHandlers {
  onMap?(map: AssembledMap): void;
  onOdometry?(msg: OdometryMsg): void;
  onTrajectory?(msg: TrajectoryMsg): void;
  onStatus?(msg: StatusMsg): void;
  onConnection?(state: "connecting" | "connected" | "closed"): void;
  onError?(code: string, detail: string): void;
}

export class BridgeClient {
  readonly assembler = new MapAssembler();
  targetsPublished = 0;
  private socket: SocketLike | null = null;
  private seq = 0;

  constructor(
    private readonly url: string,
    private readonly handlers: ClientHandlers,
    private readonly clientId: string = "console",
    private readonly factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {}

  connect(): void {
    this.handlers.onConnection?.("connecting");
    const ws = this.factory(this.url);
    this.socket = ws;
    ws.onopen = () => {
      for (const topic of SERVER_TOPICS) ws.send(subscribeText(topic));
      this.handlers.onConnection?.("connected");
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    ws.onclose = () => this.handlers.onConnection?.("closed");
  }

  close(): void {
    this.socket?.close();
  }

  /** Parse one raw frame; exposed so tests can drive the client directly. */
  handleMessage(raw: string): void {
    let env: Envelope;
    try {
      env = parseEnvelope(raw);
    } catch {
      return; // tolerate unknown frames from future servers
    }
    if (env.op === "error") {
      this.handlers.onError?.(env.code ?? "unknown", env.detail ?? "");
      return;
    }
    switch (env.topic) {
      case TOPIC_OCCUPANCY: {
        const done = this.assembler.offer(env.msg as MapChunk);
        if (done) this.handlers.onMap?.(done);
        break;
      }
      case TOPIC_ODOMETRY:
        this.handlers.onOdometry?.(env.msg as OdometryMsg);
        break;
      case TOPIC_TRAJECTORY:
        this.handlers.onTrajectory?.(env.msg as TrajectoryMsg);
        break;
      case TOPIC_STATUS:
        this.handlers.onStatus?.(env.msg as StatusMsg);
        break;
      default:
        break; // mesh and future topics are optional for the console
    }
  }

  /** One gesture publishes exactly one command. */
  publishTarget(position: [number, number, number]): number {
    if (!this.socket) throw new Error("publishTarget before connect()");
    this.seq += 1;
    this.socket.send(targetText(position, this.seq, this.clientId));
    this.targetsPublished += 1;
    return this.seq;
  }
}
