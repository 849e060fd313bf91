import asyncio
import json

import numpy as np
import pytest

from voxbridge.bridge import (
    TOPIC_OCCUPANCY,
    TOPIC_ODOMETRY,
    TOPIC_TARGET,
    BandwidthLedger,
    BridgeServer,
    MapThrottle,
    ProtocolError,
    chunk_snapshot,
    parse_envelope,
    parse_target_payload,
)
from voxbridge.occupancy import VoxelSnapshot
from voxbridge.sim import DronePose

import websockets


def snap(n_voxels, revision=1, resolution=0.1):
    vox = np.stack(
        [np.arange(n_voxels), np.zeros(n_voxels, np.int64), np.zeros(n_voxels, np.int64)], axis=1
    )
    return VoxelSnapshot(resolution=resolution, occupied=vox, revision=revision)


class TestChunking:
    def test_split_sizes(self):
        chunks = chunk_snapshot(snap(45_000), max_voxels=30_000)
        assert [len(c["voxels"]) // 3 for c in chunks] == [30_000, 15_000]
        assert all(c["chunk_count"] == 2 for c in chunks)
        assert [c["chunk_index"] for c in chunks] == [0, 1]
        assert len({c["revision"] for c in chunks}) == 1

    def test_cap_respected_for_many_sizes(self):
        for n in (1, 29_999, 30_000, 30_001, 90_000):
            chunks = chunk_snapshot(snap(n), max_voxels=30_000)
            assert all(len(c["voxels"]) // 3 <= 30_000 for c in chunks)
            total = sum(len(c["voxels"]) // 3 for c in chunks)
            assert total == n

    def test_empty_snapshot_single_empty_chunk(self):
        chunks = chunk_snapshot(snap(0), max_voxels=30_000)
        assert len(chunks) == 1
        assert chunks[0]["voxels"] == []

    def test_reassembly_is_lossless(self):
        s = snap(70_000, revision=9)
        chunks = chunk_snapshot(s, max_voxels=30_000)
        flat = []
        for c in sorted(chunks, key=lambda c: c["chunk_index"]):
            flat.extend(c["voxels"])
        assert np.array_equal(np.asarray(flat).reshape(-1, 3), s.occupied)


class TestThrottle:
    def test_at_most_rate_plus_flush(self):
        th = MapThrottle(rate_hz=2.0)
        published = 0
        for i in range(100):  # 10 Hz offers for 10 s
            if th.offer(snap(1, revision=i), now=i * 0.1) is not None:
                published += 1
        if th.flush() is not None:
            published += 1
        assert published <= 21

    def test_latest_wins(self):
        th = MapThrottle(rate_hz=2.0)
        assert th.offer(snap(1, revision=1), now=0.0).revision == 1
        assert th.offer(snap(1, revision=2), now=0.1) is None
        assert th.offer(snap(1, revision=3), now=0.2) is None
        out = th.offer(snap(1, revision=4), now=0.5)
        assert out.revision == 4

    def test_flush_drains_pending_once(self):
        th = MapThrottle(rate_hz=2.0)
        th.offer(snap(1, revision=1), now=0.0)
        th.offer(snap(1, revision=2), now=0.1)
        assert th.flush().revision == 2
        assert th.flush() is None

    def test_exact_interval_boundary_publishes(self):
        th = MapThrottle(rate_hz=2.0)
        assert th.offer(snap(1), now=0.0) is not None
        assert th.offer(snap(1), now=0.5) is not None  # exactly one interval later


class TestEnvelopes:
    def test_valid_subscribe(self):
        doc = parse_envelope(json.dumps({"op": "subscribe", "topic": "/odometry"}))
        assert doc["op"] == "subscribe"

    @pytest.mark.parametrize(
        "raw",
        [
            "not json",
            json.dumps(["a", "list"]),
            json.dumps({"op": "dance", "topic": "/odometry"}),
            json.dumps({"op": "subscribe", "topic": "/nope"}),
            json.dumps({"op": "publish", "topic": "/odometry", "msg": {}}),
        ],
    )
    def test_bad_envelopes_rejected(self, raw):
        with pytest.raises(ProtocolError):
            parse_envelope(raw)

    def test_target_payload_parsed(self):
        cmd = parse_target_payload({"position": [1, 2.5, 0.5], "seq": 4, "client_id": "op1"})
        assert cmd == {"position": [1.0, 2.5, 0.5], "seq": 4, "client_id": "op1", "stamp": 0.0}

    @pytest.mark.parametrize(
        "msg",
        [None, {}, {"position": [1, 2]}, {"position": [1, 2, "x"]}, {"position": [1, 2, float("nan")]}],
    )
    def test_bad_targets_rejected(self, msg):
        with pytest.raises(ProtocolError):
            parse_target_payload(msg)


class TestLedger:
    def test_empty_report(self):
        rep = BandwidthLedger().report(duration_s=0.0)
        assert rep["topics"] == {}
        assert rep["occupancy_to_fpv_ratio"] is None

    def test_ratio_against_fpv(self):
        led = BandwidthLedger(fpv_rate_hz=30.0, fpv_frame_bytes=200 * 1024)
        led.record(TOPIC_OCCUPANCY, 1000)
        led.record(TOPIC_OCCUPANCY, 500)
        rep = led.report(duration_s=10.0)
        assert rep["topics"][TOPIC_OCCUPANCY] == {"bytes": 1500, "messages": 2}
        assert rep["fpv_estimate_bytes"] == pytest.approx(30.0 * 200 * 1024 * 10.0)
        assert rep["occupancy_to_fpv_ratio"] == pytest.approx(1500 / (30.0 * 200 * 1024 * 10.0))


async def recv_msgs(ws, n, timeout=5.0):
    out = []
    for _ in range(n):
        out.append(json.loads(await asyncio.wait_for(ws.recv(), timeout)))
    return out


class TestServer:
    """End-to-end over real websockets on the loopback interface."""

    @pytest.fixture
    def port(self):
        import socket

        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        p = s.getsockname()[1]
        s.close()
        return p

    def test_subscribe_and_receive_odometry(self, port):
        async def scenario():
            clock = {"t": 0.0}
            server = BridgeServer(port=port, clock=lambda: clock["t"])
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send(json.dumps({"op": "subscribe", "topic": TOPIC_ODOMETRY}))
                    await asyncio.sleep(0.05)
                    clock["t"] = 1.5
                    server.publish_odometry(DronePose(np.array([1.0, 2.0, 0.5]), 0.3, 1.5))
                    (msg,) = await recv_msgs(ws, 1)
                    assert msg["topic"] == TOPIC_ODOMETRY
                    assert msg["seq"] == 1
                    assert msg["stamp"] == 1.5
                    assert msg["msg"]["position"] == [1.0, 2.0, 0.5]
            finally:
                await server.stop()

        asyncio.run(scenario())

    def test_map_chunks_reassemble_and_seq_orders(self, port):
        async def scenario():
            server = BridgeServer(port=port, max_voxels=10)
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send(json.dumps({"op": "subscribe", "topic": TOPIC_OCCUPANCY}))
                    await asyncio.sleep(0.05)
                    s = snap(25, revision=3)
                    chunks = server.offer_snapshot(s, now=0.0)
                    assert len(chunks) == 3
                    msgs = await recv_msgs(ws, 3)
                    assert [m["seq"] for m in msgs] == [1, 2, 3]
                    flat = []
                    for m in sorted(msgs, key=lambda m: m["msg"]["chunk_index"]):
                        assert m["msg"]["revision"] == 3
                        flat.extend(m["msg"]["voxels"])
                    assert np.array_equal(np.asarray(flat).reshape(-1, 3), s.occupied)
            finally:
                await server.stop()

        asyncio.run(scenario())

    def test_target_publish_reaches_handler(self, port):
        async def scenario():
            got = []
            server = BridgeServer(port=port, target_handler=got.append)
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send(
                        json.dumps(
                            {
                                "op": "publish",
                                "topic": TOPIC_TARGET,
                                "msg": {"position": [1.0, 2.0, 0.5], "seq": 7},
                            }
                        )
                    )
                    await asyncio.sleep(0.1)
            finally:
                await server.stop()
            assert got == [{"position": [1.0, 2.0, 0.5], "seq": 7, "client_id": "anonymous", "stamp": 0.0}]
            assert server.target_messages == 1

        asyncio.run(scenario())

    def test_bad_message_gets_error_and_keeps_connection(self, port):
        async def scenario():
            server = BridgeServer(port=port)
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send("garbage")
                    (err,) = await recv_msgs(ws, 1)
                    assert err["op"] == "error"
                    assert err["code"] == "parse_error"
                    # connection still usable
                    await ws.send(json.dumps({"op": "subscribe", "topic": TOPIC_ODOMETRY}))
                    await asyncio.sleep(0.05)
                    server.publish_odometry(DronePose(np.zeros(3), 0.0, 0.0))
                    (msg,) = await recv_msgs(ws, 1)
                    assert msg["topic"] == TOPIC_ODOMETRY
            finally:
                await server.stop()

        asyncio.run(scenario())

    def test_rejected_target_reports_error(self, port):
        def handler(cmd):
            raise ValueError("target outside world bounds")

        async def scenario():
            server = BridgeServer(port=port, target_handler=handler)
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send(
                        json.dumps(
                            {"op": "publish", "topic": TOPIC_TARGET, "msg": {"position": [99, 0, 0]}}
                        )
                    )
                    (err,) = await recv_msgs(ws, 1)
                    assert err["code"] == "target_rejected"
            finally:
                await server.stop()

        asyncio.run(scenario())

    def test_mesh_sent_on_subscribe(self, port):
        async def scenario():
            server = BridgeServer(port=port)
            server.set_mesh({"vertices": [0.0] * 9, "triangles": [0, 1, 2]})
            await server.start()
            try:
                async with websockets.connect(server.url) as ws:
                    await ws.send(json.dumps({"op": "subscribe", "topic": "/mesh_map"}))
                    (msg,) = await recv_msgs(ws, 1)
                    assert msg["topic"] == "/mesh_map"
                    assert msg["msg"]["triangles"] == [0, 1, 2]
            finally:
                await server.stop()

        asyncio.run(scenario())

    def test_bandwidth_counted_once_per_broadcast(self, port):
        async def scenario():
            server = BridgeServer(port=port)
            await server.start()
            try:
                conns = [await websockets.connect(server.url) for _ in range(3)]
                for ws in conns:
                    await ws.send(json.dumps({"op": "subscribe", "topic": TOPIC_ODOMETRY}))
                await asyncio.sleep(0.1)
                server.publish_odometry(DronePose(np.zeros(3), 0.0, 0.0))
                for ws in conns:
                    await recv_msgs(ws, 1)
                for ws in conns:
                    await ws.close()
            finally:
                await server.stop()
            assert server.ledger.topics[TOPIC_ODOMETRY]["messages"] == 1

        asyncio.run(scenario())
