"""Command line entry points.

Subcommands: sim, bridge, mission, metrics, replay, voxel-mesh.
MissionConfig fields can come from --config (JSON/YAML), be overridden by
VB_* environment variables, and finally by explicit flags.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .bridge import MAP_RATE_HZ, MAX_VOXELS_PER_MESSAGE, BridgeServer
from .mesh import save_mesh, voxel_surface_mesh
from .metrics import (
    LogFormatError,
    SessionLog,
    TaskSpec,
    format_report,
    replay_events,
    session_report,
)
from .mission import MissionConfig, MissionResult, run_mission
from .occupancy import VoxelSnapshot
from .world import WorldFileError, load_world

ENV_PREFIX = "VB_"

_ENV_TYPES = {
    "port": int,
    "seed": int,
    "max_voxels": int,
    "map_rate_hz": float,
    "sensor_rate_hz": float,
    "v_max": float,
    "clearance": float,
    "resolution": float,
    "duration_s": float,
    "world": str,
    "script": str,
    "session_log": str,
}


class UsageError(Exception):
    pass


def _env_overrides() -> dict:
    out = {}
    for name, cast in _ENV_TYPES.items():
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            try:
                out[name] = cast(raw)
            except ValueError as e:
                raise UsageError(f"bad {ENV_PREFIX}{name.upper()}={raw!r}: {e}") from e
    return out


def _load_config_file(path) -> dict:
    text = Path(path).read_text()
    doc = yaml.safe_load(text) if Path(path).suffix.lower() in (".yaml", ".yml") else json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return doc


def _mission_config(args) -> MissionConfig:
    doc: dict = {}
    if args.config:
        doc.update(_load_config_file(args.config))
    doc.update(_env_overrides())
    for name in ("world", "script", "session_log", "port", "seed", "map_rate_hz",
                 "max_voxels", "sensor_rate_hz", "v_max", "clearance", "resolution",
                 "duration_s"):
        val = getattr(args, name, None)
        if val is not None:
            doc[name] = val
    if getattr(args, "realtime", False):
        doc["realtime"] = True
    if getattr(args, "fast", False):
        doc["realtime"] = False
    if getattr(args, "no_serve", False):
        doc["serve"] = False
    if "world" not in doc:
        raise UsageError("a world file is required (--world or config)")
    try:
        return MissionConfig.from_dict(doc)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _print_mission_result(res: MissionResult) -> None:
    print(f"mission finished: state={res.final_state}")
    print(f"  sim time      : {res.sim_duration:.1f} s (wall {res.wall_duration:.1f} s)")
    print(f"  commands      : {res.commands_received}")
    print(f"  coverage      : {100.0 * res.coverage:.1f}% of reachable free space")
    print(f"  min clearance : {res.min_obstacle_distance:.3f} m")
    print("bandwidth report:")
    print(json.dumps(res.bandwidth, indent=2))


def _add_mission_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="MissionConfig document (JSON or YAML)")
    p.add_argument("--world", help="world file (JSON or YAML)")
    p.add_argument("--script", help="scripted operator command file")
    p.add_argument("--session-log", dest="session_log", help="session log output (JSON-lines)")
    p.add_argument("--snapshot-out", dest="snapshot_out", help="write final occupancy snapshot JSON")
    p.add_argument("--port", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--rate", dest="sensor_rate_hz", type=float, help="sensor rate in Hz")
    p.add_argument("--map-rate-hz", dest="map_rate_hz", type=float)
    p.add_argument("--max-voxels", dest="max_voxels", type=int)
    p.add_argument("--v-max", dest="v_max", type=float)
    p.add_argument("--clearance", type=float)
    p.add_argument("--resolution", type=float)
    p.add_argument("--duration", dest="duration_s", type=float)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--realtime", action="store_true", help="pace sim clock to wall clock")
    mode.add_argument("--fast", action="store_true", help="run as fast as possible (default)")


def _cmd_sim(args) -> int:
    args.no_serve = True
    cfg = _mission_config(args)
    res = run_mission(cfg)
    _finish_mission(args, res)
    return 0


def _cmd_mission(args) -> int:
    args.no_serve = False
    cfg = _mission_config(args)
    httpd = None
    if getattr(args, "serve_console", None):
        httpd = _serve_static(args.serve_console, args.console_port)
        print(f"console at http://127.0.0.1:{httpd.server_address[1]}/ "
              f"(bridge ws://127.0.0.1:{cfg.port}/)")
    try:
        res = run_mission(cfg)
    finally:
        if httpd is not None:
            httpd.shutdown()
    _finish_mission(args, res)
    return 0


def _serve_static(directory: str, port: int):
    """Static file server for the operator console, on a daemon thread."""
    import functools
    import http.server
    import threading

    if not Path(directory).is_dir():
        raise UsageError(f"console directory not found: {directory}")
    handler = functools.partial(http.server.SimpleHTTPRequestHandler, directory=directory)
    httpd = http.server.ThreadingHTTPServer(("127.0.0.1", port), handler)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    return httpd


def _finish_mission(args, res: MissionResult) -> None:
    if getattr(args, "snapshot_out", None):
        snap = res.grid.snapshot()
        Path(args.snapshot_out).write_text(
            json.dumps(
                {
                    "resolution": snap.resolution,
                    "revision": snap.revision,
                    "voxels": snap.occupied.ravel().tolist(),
                }
            )
        )
    _print_mission_result(res)


def _cmd_bridge(args) -> int:
    async def serve() -> None:
        server = BridgeServer(port=args.port, map_rate_hz=args.map_rate_hz, max_voxels=args.max_voxels)
        await server.start()
        print(f"bridge listening on {server.url}")
        try:
            await asyncio.Event().wait()
        finally:
            await server.stop()

    try:
        asyncio.run(serve())
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_metrics(args) -> int:
    log = SessionLog.load(args.session)
    tasks = TaskSpec.load(args.tasks) if args.tasks else None
    report = session_report(log, tasks)
    print(format_report(report))
    if args.json:
        print(json.dumps(report))
    return 0


def _cmd_replay(args) -> int:
    log = SessionLog.load(args.session)
    speed = float("inf") if args.speed in ("inf", "batch") else float(args.speed)
    if speed <= 0:
        raise UsageError("--speed must be > 0")

    kind_topic = {
        "pose_sample": "/odometry",
        "mission_status": "/mission_status",
        "target_command": "/target",
        "anchor_change": "/mission_status",
    }

    async def run() -> None:
        now = 0.0
        server = BridgeServer(port=args.port, clock=lambda: now)
        await server.start()
        print(f"replaying {args.session} on {server.url} at speed {args.speed}")
        try:
            loop_start = asyncio.get_event_loop().time()
            for emit, event in replay_events(log, speed):
                delay = emit - (asyncio.get_event_loop().time() - loop_start)
                if delay > 0:
                    await asyncio.sleep(delay)
                now = event.stamp
                topic = kind_topic.get(event.kind)
                if topic:
                    server._broadcast(topic, {"kind": event.kind, **event.payload})
            await asyncio.sleep(0.1)
        finally:
            await server.stop()

    asyncio.run(run())
    return 0


def _load_snapshot_file(path) -> VoxelSnapshot:
    doc = json.loads(Path(path).read_text())
    vox = np.asarray(doc["voxels"], dtype=np.int64).reshape(-1, 3)
    return VoxelSnapshot(
        resolution=float(doc["resolution"]), occupied=vox, revision=int(doc.get("revision", 0))
    )


def _cmd_voxel_mesh(args) -> int:
    snap = _load_snapshot_file(args.snapshot)
    asset = voxel_surface_mesh(snap)
    save_mesh(asset, args.output)
    print(f"wrote {args.output}: {len(asset.vertices)} vertices, {len(asset.triangles)} triangles")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxbridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run the simulator loop without a server")
    _add_mission_flags(p)
    p.set_defaults(func=_cmd_sim)

    p = sub.add_parser("bridge", help="run a standalone broadcast server")
    p.add_argument("--port", type=int, default=9090)
    p.add_argument("--map-rate-hz", dest="map_rate_hz", type=float, default=MAP_RATE_HZ)
    p.add_argument("--max-voxels", dest="max_voxels", type=int, default=MAX_VOXELS_PER_MESSAGE)
    p.set_defaults(func=_cmd_bridge)

    p = sub.add_parser("mission", help="run sim + bridge with a scripted operator")
    _add_mission_flags(p)
    p.add_argument("--serve-console", dest="serve_console", metavar="DIR",
                   help="also serve the operator console (static files) from DIR")
    p.add_argument("--console-port", dest="console_port", type=int, default=8080)
    p.set_defaults(func=_cmd_mission)

    p = sub.add_parser("metrics", help="compute study metrics from a session log")
    p.add_argument("session", help="session log (JSON-lines)")
    p.add_argument("--tasks", help="task spec JSON with designated positions")
    p.add_argument("--json", action="store_true", help="also print the report as JSON")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("replay", help="re-emit a session log on the bridge topics")
    p.add_argument("session")
    p.add_argument("--speed", default="1.0", help="playback factor, or 'batch'")
    p.add_argument("--port", type=int, default=9090)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("voxel-mesh", help="extrude an occupancy snapshot into a PLY mesh")
    p.add_argument("snapshot", help="snapshot JSON produced by mission --snapshot-out")
    p.add_argument("-o", "--output", required=True, help="PLY output path")
    p.set_defaults(func=_cmd_voxel_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, WorldFileError, LogFormatError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
