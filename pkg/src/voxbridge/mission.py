"""Mission orchestration: sim + mapping + planner + bridge + recorder.

A scripted-operator mode (target commands from a file, stamped in sim time)
makes the whole loop runnable and testable with no human and no console.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import esdf as esdf_mod
from . import planner as planner_mod
from .bridge import (
    FPV_FRAME_BYTES,
    FPV_RATE_HZ,
    MAP_RATE_HZ,
    MAX_VOXELS_PER_MESSAGE,
    BridgeServer,
)
from .metrics import SessionLog
from .occupancy import OccupancyGrid
from .sim import (
    DRONE_RADIUS,
    SENSOR_RATE_HZ,
    V_MAX,
    DroneSimulator,
    MissionState,
    OutOfBounds,
    SensorConfig,
    TargetCommand,
)
from .world import WorldModel, load_world

ESDF_D_MAX = 2.0
DEFAULT_CLEARANCE = 0.3

_ASSETS = Path(__file__).parent / "assets"


def reference_world_path() -> Path:
    """Bundled 5 x 6 x 3 m indoor test volume."""
    return _ASSETS / "office_world.json"


def reference_script_path() -> Path:
    """Bundled 28-command exploration tour of the reference world."""
    return _ASSETS / "office_script.json"


@dataclass
class MissionConfig:
    world: str | Path
    port: int = 9090
    seed: int = 0
    map_rate_hz: float = MAP_RATE_HZ
    max_voxels: int = MAX_VOXELS_PER_MESSAGE
    sensor_rate_hz: float = SENSOR_RATE_HZ
    v_max: float = V_MAX
    clearance: float = DEFAULT_CLEARANCE
    realtime: bool = False
    resolution: float = 0.1
    drone_radius: float = DRONE_RADIUS
    start: tuple[float, float, float] | None = None
    duration_s: float = 300.0
    script: str | Path | None = None
    session_log: str | Path | None = None
    serve: bool = True
    fpv_rate_hz: float = FPV_RATE_HZ
    fpv_frame_bytes: int = FPV_FRAME_BYTES

    def __post_init__(self):
        if self.map_rate_hz <= 0 or self.sensor_rate_hz <= 0 or self.v_max <= 0:
            raise ValueError("rates and v_max must be > 0")
        if self.max_voxels < 1:
            raise ValueError("max_voxels must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict, **overrides) -> "MissionConfig":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        known.update(overrides)
        return cls(**known)


def load_script(path) -> list[tuple[float, np.ndarray]]:
    """Target command script: JSON list of {stamp, position} or JSON-lines."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = [json.loads(line) for line in text.splitlines() if line.strip()]
    if isinstance(doc, dict):
        doc = doc["commands"]
    cmds = [(float(c["stamp"]), np.asarray(c["position"], dtype=float)) for c in doc]
    return sorted(cmds, key=lambda c: c[0])


def world_region(world: WorldModel, resolution: float, pad: int = 2) -> esdf_mod.IndexBox:
    lo = np.floor(world.bounds.lo / resolution).astype(int) - pad
    hi = np.ceil(world.bounds.hi / resolution).astype(int) - 1 + pad
    return esdf_mod.IndexBox(tuple(lo), tuple(hi))


def free_mask_region(grid: OccupancyGrid, region: esdf_mod.IndexBox) -> np.ndarray:
    """Dense known-free mask over a region, from the sparse grid."""
    mask = np.zeros(region.shape, dtype=bool)
    free = grid.free_voxels()
    if len(free):
        rel = free - np.asarray(region.lo, dtype=np.int64)
        keep = np.all((rel >= 0) & (rel < np.asarray(region.shape)), axis=1)
        rel = rel[keep]
        mask[rel[:, 0], rel[:, 1], rel[:, 2]] = True
    return mask


def make_plan_service(grid: OccupancyGrid, world: WorldModel, clearance: float, speed: float):
    """Planner over the drone's own map: rebuild ESDF, A*, then smooth."""
    # pad=0 keeps every plannable voxel center inside the world bounds
    region = world_region(world, grid.resolution, pad=0)

    def service(start: np.ndarray, goal: np.ndarray):
        snap = grid.snapshot()
        field_ = esdf_mod.build(snap, region, d_max=ESDF_D_MAX)
        known_free = free_mask_region(grid, region)
        req = planner_mod.PlanRequest(
            start=start, goal=goal, clearance=clearance, esdf=field_,
            known_free=known_free, speed=speed,
        )
        traj = planner_mod.plan(req)
        return planner_mod.smooth(traj, field_, clearance)

    return service


def ground_truth_free_mask(world: WorldModel, region: esdf_mod.IndexBox, resolution: float) -> np.ndarray:
    """Voxels whose center lies inside bounds and outside every obstacle."""
    lo = np.asarray(region.lo, dtype=float)
    nx, ny, nz = region.shape
    xs = (lo[0] + np.arange(nx) + 0.5) * resolution
    ys = (lo[1] + np.arange(ny) + 0.5) * resolution
    zs = (lo[2] + np.arange(nz) + 0.5) * resolution
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    free = (
        (X >= world.bounds.lo[0]) & (X <= world.bounds.hi[0])
        & (Y >= world.bounds.lo[1]) & (Y <= world.bounds.hi[1])
        & (Z >= world.bounds.lo[2]) & (Z <= world.bounds.hi[2])
    )
    for b in world.obstacles:
        inside = (
            (X >= b.lo[0]) & (X <= b.hi[0])
            & (Y >= b.lo[1]) & (Y <= b.hi[1])
            & (Z >= b.lo[2]) & (Z <= b.hi[2])
        )
        free &= ~inside
    return free


def reachable_free_mask(free: np.ndarray, seed_cell: tuple[int, int, int]) -> np.ndarray:
    """6-connected flood fill of the free mask from the seed cell."""
    reach = np.zeros_like(free)
    if not free[seed_cell]:
        return reach
    reach[seed_cell] = True
    while True:
        grown = reach.copy()
        grown[1:, :, :] |= reach[:-1, :, :]
        grown[:-1, :, :] |= reach[1:, :, :]
        grown[:, 1:, :] |= reach[:, :-1, :]
        grown[:, :-1, :] |= reach[:, 1:, :]
        grown[:, :, 1:] |= reach[:, :, :-1]
        grown[:, :, :-1] |= reach[:, :, 1:]
        grown &= free
        if np.array_equal(grown, reach):
            return reach
        reach = grown


def coverage_fraction(world: WorldModel, grid: OccupancyGrid, start) -> float:
    """Fraction of ground-truth reachable free voxels observed by the map."""
    region = world_region(world, grid.resolution, pad=0)
    free = ground_truth_free_mask(world, region, grid.resolution)
    seed = tuple(
        np.floor(np.asarray(start, dtype=float) / grid.resolution).astype(int)
        - np.asarray(region.lo)
    )
    reach = reachable_free_mask(free, seed)
    total = int(reach.sum())
    if total == 0:
        return 0.0
    observed = np.zeros(region.shape, dtype=bool)
    for coords in (grid.free_voxels(), grid.occupied_voxels()):
        if len(coords):
            rel = coords - np.asarray(region.lo, dtype=np.int64)
            keep = np.all((rel >= 0) & (rel < np.asarray(region.shape)), axis=1)
            rel = rel[keep]
            observed[rel[:, 0], rel[:, 1], rel[:, 2]] = True
    return float((observed & reach).sum() / total)


@dataclass
class MissionResult:
    sim_duration: float
    wall_duration: float
    coverage: float
    commands_received: int
    final_state: str
    bandwidth: dict
    log: SessionLog
    min_obstacle_distance: float
    grid: OccupancyGrid = field(repr=False, default=None)


def default_start(world: WorldModel) -> np.ndarray:
    return world.bounds.lo + np.array([0.5, 0.5, 1.0])


async def run_mission_async(cfg: MissionConfig, world: WorldModel | None = None) -> MissionResult:
    if world is None:
        world = load_world(cfg.world)
    start = np.asarray(cfg.start if cfg.start is not None else default_start(world), dtype=float)
    grid = OccupancyGrid(resolution=cfg.resolution)
    sim = DroneSimulator(
        world,
        start,
        v_max=cfg.v_max,
        drone_radius=cfg.drone_radius,
        sensor=SensorConfig(rate_hz=cfg.sensor_rate_hz),
        plan_service=make_plan_service(grid, world, cfg.clearance, cfg.v_max),
        seed=cfg.seed,
    )
    pending_targets: list[dict] = []
    bridge = BridgeServer(
        port=cfg.port,
        map_rate_hz=cfg.map_rate_hz,
        max_voxels=cfg.max_voxels,
        clock=lambda: sim.clock,
        target_handler=lambda cmd: pending_targets.append(cmd),
        fpv_rate_hz=cfg.fpv_rate_hz,
        fpv_frame_bytes=cfg.fpv_frame_bytes,
    )
    if cfg.serve:
        await bridge.start()

    script = load_script(cfg.script) if cfg.script else []
    log = SessionLog()
    dt = 1.0 / cfg.sensor_rate_hz
    wall_start = time.monotonic()
    next_cmd = 0
    seq = 0
    task_open = False
    last_state = sim.status().state
    min_dist = math.inf

    def end_task(outcome: str) -> None:
        nonlocal task_open
        if task_open:
            log.add(sim.clock, "task_end", outcome=outcome)
            task_open = False

    def inject(position, stamp) -> None:
        nonlocal seq, task_open, last_state
        seq += 1
        cmd = TargetCommand(np.asarray(position, dtype=float), seq=seq, stamp=stamp)
        end_task("superseded")
        log.add(sim.clock, "target_command", position=list(map(float, cmd.position)), seq=seq)
        try:
            status = sim.accept_target(cmd)
        except OutOfBounds:
            log.add(sim.clock, "mission_status", state="rejected", detail="out_of_bounds")
            return
        log.add(sim.clock, "task_begin", seq=seq)
        task_open = True
        log.add(sim.clock, "mission_status", state=status.state.value)
        bridge.publish_status(status)
        if sim.trajectory is not None:
            bridge.publish_trajectory(sim.trajectory)
        if status.state in (MissionState.REACHED, MissionState.BLOCKED):
            end_task(status.state.value)
        last_state = status.state

    try:
        while True:
            now = sim.clock
            while next_cmd < len(script) and script[next_cmd][0] <= now + 1e-9:
                inject(script[next_cmd][1], script[next_cmd][0])
                next_cmd += 1
            for cmd in pending_targets:
                inject(cmd["position"], now)
            pending_targets.clear()

            pose, scans = sim.step(dt)
            for scan in scans:
                grid.integrate_scan(scan)
            min_dist = min(min_dist, world.obstacle_distance(pose.position))
            bridge.publish_odometry(sim.odometry())
            bridge.offer_snapshot(grid.snapshot(pose), now=sim.clock)
            log.add(sim.clock, "pose_sample", position=list(map(float, pose.position)), yaw=pose.yaw)

            state = sim.status().state
            if state != last_state:
                log.add(sim.clock, "mission_status", state=state.value)
                bridge.publish_status(sim.status())
                if state in (MissionState.REACHED, MissionState.BLOCKED):
                    end_task(state.value)
                last_state = state

            idle = state in (MissionState.IDLE, MissionState.REACHED, MissionState.BLOCKED)
            if sim.clock >= cfg.duration_s or (next_cmd >= len(script) and idle and not pending_targets):
                break
            if cfg.realtime:
                lag = sim.clock - (time.monotonic() - wall_start)
                if lag > 0:
                    await asyncio.sleep(lag)
                else:
                    await asyncio.sleep(0)
            else:
                await asyncio.sleep(0)
        bridge.flush_map()
        end_task("session_end")
        await asyncio.sleep(0)
    finally:
        if cfg.serve:
            await bridge.stop()

    if cfg.session_log:
        log.save(cfg.session_log)
    return MissionResult(
        sim_duration=sim.clock,
        wall_duration=time.monotonic() - wall_start,
        coverage=coverage_fraction(world, grid, start),
        commands_received=sim.commands_received,
        final_state=sim.status().state.value,
        bandwidth=bridge.bandwidth_report(sim.clock),
        log=log,
        min_obstacle_distance=min_dist,
        grid=grid,
    )


def run_mission(cfg: MissionConfig, world: WorldModel | None = None) -> MissionResult:
    return asyncio.run(run_mission_async(cfg, world))
