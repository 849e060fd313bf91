"""Websocket broadcast server between the simulator and any number of
consoles: topic pub/sub with JSON envelopes, map throttling and chunk
capping, target-command ingestion, and per-topic bandwidth accounting.

The protocol pieces (chunking, throttle, accounting, envelope validation)
are plain objects driven by the sim clock so they test without sockets;
BridgeServer wires them to websockets.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import websockets

from .occupancy import VoxelSnapshot

log = logging.getLogger(__name__)

MAP_RATE_HZ = 2.0
MAX_VOXELS_PER_MESSAGE = 30_000
MAX_FRAME_BYTES = 4 * 1024 * 1024
QUEUE_LIMIT = 8

# FPV alternative used for the bandwidth comparison
FPV_RATE_HZ = 30.0
FPV_FRAME_BYTES = 200 * 1024

TOPIC_OCCUPANCY = "/occupancy_map"
TOPIC_ODOMETRY = "/odometry"
TOPIC_TRAJECTORY = "/trajectory"
TOPIC_STATUS = "/mission_status"
TOPIC_TARGET = "/target"
TOPIC_MESH = "/mesh_map"

SERVER_TOPICS = (TOPIC_OCCUPANCY, TOPIC_ODOMETRY, TOPIC_TRAJECTORY, TOPIC_STATUS, TOPIC_MESH)
CLIENT_TOPICS = (TOPIC_TARGET,)
ALL_TOPICS = SERVER_TOPICS + CLIENT_TOPICS


class ProtocolError(ValueError):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def pose_payload(pose) -> dict:
    return {
        "position": np.asarray(pose.position, dtype=float).tolist(),
        "yaw": float(pose.yaw),
        "stamp": float(pose.stamp),
    }


def chunk_snapshot(snapshot: VoxelSnapshot, max_voxels: int = MAX_VOXELS_PER_MESSAGE) -> list[dict]:
    """Split one snapshot into <= max_voxels chunks sharing its revision.

    Chunks of one revision concatenate to the snapshot's occupied set
    exactly once; an empty snapshot is one chunk with an empty array.
    """
    occ = snapshot.occupied
    count = max(1, math.ceil(len(occ) / max_voxels))
    chunks = []
    for i in range(count):
        part = occ[i * max_voxels : (i + 1) * max_voxels]
        chunks.append(
            {
                "resolution": snapshot.resolution,
                "revision": snapshot.revision,
                "chunk_index": i,
                "chunk_count": count,
                "voxels": np.asarray(part, dtype=np.int64).ravel().tolist(),
                "drone_pose": pose_payload(snapshot.pose) if snapshot.pose is not None else None,
            }
        )
    return chunks


class MapThrottle:
    """At most one snapshot per interval; latest offered snapshot wins."""

    def __init__(self, rate_hz: float = MAP_RATE_HZ, eps: float = 1e-9):
        if not rate_hz > 0:
            raise ValueError("map rate must be > 0")
        self.interval = 1.0 / rate_hz
        self.eps = eps
        self._pending: VoxelSnapshot | None = None
        self._last_pub: float | None = None

    def offer(self, snapshot: VoxelSnapshot, now: float) -> VoxelSnapshot | None:
        self._pending = snapshot
        return self.poll(now)

    def poll(self, now: float) -> VoxelSnapshot | None:
        if self._pending is None:
            return None
        if self._last_pub is not None and now - self._last_pub < self.interval - self.eps:
            return None
        snap, self._pending = self._pending, None
        self._last_pub = now
        return snap

    def flush(self) -> VoxelSnapshot | None:
        """Hand out any still-pending snapshot (end-of-session drain)."""
        snap, self._pending = self._pending, None
        return snap


@dataclass
class BandwidthLedger:
    """Exact serialized byte counts per topic plus the FPV alternative."""

    fpv_rate_hz: float = FPV_RATE_HZ
    fpv_frame_bytes: int = FPV_FRAME_BYTES
    topics: dict = field(default_factory=dict)

    def record(self, topic: str, nbytes: int) -> None:
        entry = self.topics.setdefault(topic, {"bytes": 0, "messages": 0})
        entry["bytes"] += nbytes
        entry["messages"] += 1

    def report(self, duration_s: float = 0.0) -> dict:
        fpv = self.fpv_rate_hz * self.fpv_frame_bytes * duration_s
        occ = self.topics.get(TOPIC_OCCUPANCY, {"bytes": 0})["bytes"]
        return {
            "topics": {k: dict(v) for k, v in sorted(self.topics.items())},
            "duration_s": duration_s,
            "fpv_estimate_bytes": fpv,
            "occupancy_to_fpv_ratio": (occ / fpv) if fpv > 0 else None,
        }


def parse_envelope(raw: str | bytes) -> dict:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ProtocolError("parse_error", str(e)) from e
    if not isinstance(doc, dict):
        raise ProtocolError("parse_error", "envelope must be a JSON object")
    op = doc.get("op")
    if op not in ("subscribe", "unsubscribe", "publish"):
        raise ProtocolError("protocol_error", f"unknown op {op!r}")
    topic = doc.get("topic")
    if topic not in ALL_TOPICS:
        raise ProtocolError("protocol_error", f"unknown topic {topic!r}")
    if op == "publish" and topic not in CLIENT_TOPICS:
        raise ProtocolError("protocol_error", f"clients may not publish on {topic}")
    return doc


def parse_target_payload(msg) -> dict:
    if not isinstance(msg, dict):
        raise ProtocolError("protocol_error", "/target msg must be an object")
    pos = msg.get("position")
    if (
        not isinstance(pos, (list, tuple))
        or len(pos) != 3
        or not all(isinstance(c, (int, float)) and math.isfinite(c) for c in pos)
    ):
        raise ProtocolError("protocol_error", "/target position must be 3 finite numbers")
    return {
        "position": [float(c) for c in pos],
        "seq": int(msg.get("seq", 0)),
        "client_id": str(msg.get("client_id", "anonymous")),
        "stamp": float(msg.get("stamp", 0.0)),
    }


class _Connection:
    """Per-client subscription set and bounded outbound queue."""

    def __init__(self, ws, queue_limit: int):
        self.ws = ws
        self.subscriptions: set[str] = set()
        self.queue: deque[tuple[str, dict | None, str]] = deque()  # (topic, meta, text)
        self.queue_limit = queue_limit
        self.wakeup = asyncio.Event()
        self.dropped = 0

    def enqueue(self, topic: str, meta: dict | None, text: str) -> None:
        if len(self.queue) >= self.queue_limit:
            self._drop_one()
        self.queue.append((topic, meta, text))
        self.wakeup.set()

    def _drop_one(self) -> None:
        # drop the oldest map revision whole, else the oldest message
        oldest_rev = None
        for topic, meta, _ in self.queue:
            if topic == TOPIC_OCCUPANCY and meta is not None:
                oldest_rev = meta["revision"]
                break
        if oldest_rev is not None:
            kept = [
                item
                for item in self.queue
                if not (item[0] == TOPIC_OCCUPANCY and item[1] and item[1]["revision"] == oldest_rev)
            ]
            self.dropped += len(self.queue) - len(kept)
            self.queue = deque(kept)
        elif self.queue:
            self.queue.popleft()
            self.dropped += 1

    async def sender(self) -> None:
        try:
            while True:
                while self.queue:
                    _, _, text = self.queue.popleft()
                    await self.ws.send(text)
                self.wakeup.clear()
                await self.wakeup.wait()
        except websockets.ConnectionClosed:
            pass


class BridgeServer:
    """Broadcast pub/sub server; stamps come from the provided sim clock."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 9090,
        map_rate_hz: float = MAP_RATE_HZ,
        max_voxels: int = MAX_VOXELS_PER_MESSAGE,
        clock=None,
        target_handler=None,
        queue_limit: int = QUEUE_LIMIT,
        fpv_rate_hz: float = FPV_RATE_HZ,
        fpv_frame_bytes: int = FPV_FRAME_BYTES,
    ):
        self.host = host
        self.port = port
        self.max_voxels = max_voxels
        self.throttle = MapThrottle(map_rate_hz)
        self.ledger = BandwidthLedger(fpv_rate_hz, fpv_frame_bytes)
        self.clock = clock if clock is not None else (lambda: 0.0)
        self.target_handler = target_handler
        self.queue_limit = queue_limit
        self._connections: dict[object, _Connection] = {}
        self._seq: dict[str, int] = {t: 0 for t in ALL_TOPICS}
        self._mesh_payload: dict | None = None
        self._server = None
        self._sender_tasks: set[asyncio.Task] = set()
        self.target_messages = 0

    # -- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        self._server = await websockets.serve(
            self._handle_client, self.host, self.port, max_size=MAX_FRAME_BYTES
        )

    async def stop(self) -> None:
        for task in list(self._sender_tasks):
            task.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}/"

    # -- publishing ----------------------------------------------------------

    def _broadcast(self, topic: str, payload: dict, meta: dict | None = None) -> str:
        self._seq[topic] += 1
        env = {
            "op": "publish",
            "topic": topic,
            "seq": self._seq[topic],
            "stamp": float(self.clock()),
            "msg": payload,
        }
        text = json.dumps(env)
        self.ledger.record(topic, len(text.encode()))
        for conn in self._connections.values():
            if topic in conn.subscriptions:
                conn.enqueue(topic, meta, text)
        return text

    def offer_snapshot(self, snapshot: VoxelSnapshot, now: float | None = None) -> list[dict]:
        """Throttled map publish; returns the chunk payloads actually sent."""
        now = float(self.clock() if now is None else now)
        due = self.throttle.offer(snapshot, now)
        return self._publish_map(due) if due is not None else []

    def poll_map(self, now: float | None = None) -> list[dict]:
        now = float(self.clock() if now is None else now)
        due = self.throttle.poll(now)
        return self._publish_map(due) if due is not None else []

    def flush_map(self) -> list[dict]:
        due = self.throttle.flush()
        return self._publish_map(due) if due is not None else []

    def _publish_map(self, snapshot: VoxelSnapshot) -> list[dict]:
        chunks = chunk_snapshot(snapshot, self.max_voxels)
        for chunk in chunks:
            self._broadcast(TOPIC_OCCUPANCY, chunk, meta={"revision": chunk["revision"]})
        return chunks

    def publish_odometry(self, pose) -> None:
        self._broadcast(TOPIC_ODOMETRY, pose_payload(pose))

    def publish_trajectory(self, traj) -> None:
        self._broadcast(
            TOPIC_TRAJECTORY,
            {
                "waypoints": np.asarray(traj.waypoints, dtype=float).ravel().tolist(),
                "timestamps": np.asarray(traj.timestamps, dtype=float).tolist(),
                "total_length": float(traj.total_length),
            },
        )

    def publish_status(self, status) -> None:
        tgt = status.active_target
        self._broadcast(
            TOPIC_STATUS,
            {
                "state": status.state.value,
                "active_target": None if tgt is None else np.asarray(tgt.position).tolist(),
                "progress": float(status.progress),
            },
        )

    def set_mesh(self, payload: dict) -> None:
        """Static mesh served to each /mesh_map subscriber on subscribe."""
        self._mesh_payload = payload

    def bandwidth_report(self, duration_s: float = 0.0) -> dict:
        return self.ledger.report(duration_s)

    # -- client side ---------------------------------------------------------

    async def _handle_client(self, ws) -> None:
        conn = _Connection(ws, self.queue_limit)
        self._connections[ws] = conn
        task = asyncio.ensure_future(conn.sender())
        self._sender_tasks.add(task)
        task.add_done_callback(self._sender_tasks.discard)
        try:
            async for raw in ws:
                try:
                    self._handle_envelope(conn, raw)
                except ProtocolError as e:
                    conn.enqueue(
                        "error", None, json.dumps({"op": "error", "code": e.code, "detail": e.detail})
                    )
        except websockets.ConnectionClosed:
            pass
        finally:
            task.cancel()
            self._connections.pop(ws, None)

    def _handle_envelope(self, conn: _Connection, raw) -> None:
        doc = parse_envelope(raw)
        op, topic = doc["op"], doc["topic"]
        if op == "subscribe":
            conn.subscriptions.add(topic)
            if topic == TOPIC_MESH and self._mesh_payload is not None:
                self._seq[TOPIC_MESH] += 1
                env = {
                    "op": "publish",
                    "topic": TOPIC_MESH,
                    "seq": self._seq[TOPIC_MESH],
                    "stamp": float(self.clock()),
                    "msg": self._mesh_payload,
                }
                text = json.dumps(env)
                self.ledger.record(TOPIC_MESH, len(text.encode()))
                conn.enqueue(TOPIC_MESH, None, text)
        elif op == "unsubscribe":
            conn.subscriptions.discard(topic)
        else:  # publish on a client topic
            cmd = parse_target_payload(doc.get("msg"))
            self.target_messages += 1
            self.ledger.record(TOPIC_TARGET, len(raw if isinstance(raw, bytes) else raw.encode()))
            if self.target_handler is not None:
                try:
                    self.target_handler(cmd)
                except ValueError as e:
                    raise ProtocolError("target_rejected", str(e)) from e
