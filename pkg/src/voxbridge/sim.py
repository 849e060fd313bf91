"""Simulated drone: kinematic point with a velocity limit, a depth ray fan,
and a target executive. Single writer: one tick loop mutates state, readers
get immutable snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .frames import normalize_yaw
from .planner import GoalUnknown, Trajectory, Unreachable, make_trajectory
from .world import WorldModel, ray_ranges

MAX_RANGE = 4.0
V_MAX = 1.0
DRONE_RADIUS = 0.2
SENSOR_RATE_HZ = 10.0


class OutOfBounds(ValueError):
    """Target position outside the world bounds."""


class MissionState(str, Enum):
    IDLE = "idle"
    PLANNING = "planning"
    FLYING = "flying"
    REACHED = "reached"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class DronePose:
    position: np.ndarray  # (3,) meters
    yaw: float  # radians, (-pi, pi]
    stamp: float  # seconds, monotonic sim clock

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if not np.all(np.isfinite(p)):
            raise ValueError("pose position must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))


@dataclass(frozen=True)
class DepthScan:
    """One ray fan: unit directions and ranges (max_range = no hit)."""

    origin: np.ndarray  # (3,)
    directions: np.ndarray  # (N, 3) unit vectors
    ranges: np.ndarray  # (N,) in (0, max_range]
    max_range: float
    stamp: float

    def __post_init__(self):
        for name in ("origin", "directions", "ranges"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class TargetCommand:
    """Operator-chosen 3D position in the map frame."""

    position: np.ndarray
    seq: int
    client_id: str = "local"
    stamp: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError("target position must be a finite 3-vector")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class MissionStatus:
    state: MissionState
    active_target: TargetCommand | None = None
    progress: float = 0.0

    def __post_init__(self):
        active = self.state in (MissionState.PLANNING, MissionState.FLYING)
        if active != (self.active_target is not None):
            raise ValueError(f"active_target must be present iff planning/flying, state={self.state}")


@dataclass(frozen=True)
class SensorConfig:
    """Fixed ray fan. Defaults make the reference world explorable in budget."""

    n_h: int = 64
    n_v: int = 16
    fov_h: float = math.radians(90.0)
    fov_v: float = math.radians(60.0)
    max_range: float = MAX_RANGE
    rate_hz: float = SENSOR_RATE_HZ

    def body_directions(self) -> np.ndarray:
        az = np.linspace(-self.fov_h / 2, self.fov_h / 2, self.n_h)
        el = np.linspace(-self.fov_v / 2, self.fov_v / 2, self.n_v)
        azg, elg = np.meshgrid(az, el, indexing="ij")
        azg, elg = azg.ravel(), elg.ravel()
        return np.stack(
            [np.cos(elg) * np.cos(azg), np.cos(elg) * np.sin(azg), np.sin(elg)], axis=1
        )


class DroneSimulator:
    """Closed-loop simulated drone over a ground-truth world.

    plan_service(start, goal) -> Trajectory plans in the drone's own map;
    when omitted targets are flown in a straight line (unit tests in open
    worlds). Scans are emitted once per sensor period from step().
    """

    def __init__(
        self,
        world: WorldModel,
        start,
        start_yaw: float = 0.0,
        v_max: float = V_MAX,
        drone_radius: float = DRONE_RADIUS,
        sensor: SensorConfig = SensorConfig(),
        plan_service=None,
        seed: int = 0,
        odom_noise_std: float = 0.0,
    ):
        start = np.asarray(start, dtype=float)
        if not world.in_free_space(start, margin=drone_radius):
            raise ValueError("start pose must be in free space")
        self.world = world
        self.v_max = v_max
        self.drone_radius = drone_radius
        self.sensor = sensor
        self.plan_service = plan_service
        self.odom_noise_std = odom_noise_std
        self._rng = np.random.default_rng(seed)
        self._body_dirs = sensor.body_directions()

        self._t = 0.0
        self._pos = start.copy()
        self._yaw = normalize_yaw(start_yaw)
        self._traj: Trajectory | None = None
        self._arc = 0.0
        self._seglen: np.ndarray | None = None
        self._status = MissionStatus(MissionState.IDLE)
        self._next_scan_t = 0.0
        self.commands_received = 0
        self.status_history: list[MissionStatus] = [self._status]

    # -- read side ---------------------------------------------------------

    @property
    def clock(self) -> float:
        return self._t

    def pose(self) -> DronePose:
        return DronePose(self._pos.copy(), self._yaw, self._t)

    def odometry(self) -> DronePose:
        """Reported pose; optionally noisy, ground truth kept internally."""
        p = self._pos.copy()
        if self.odom_noise_std > 0.0:
            p = p + self._rng.normal(0.0, self.odom_noise_std, 3)
        return DronePose(p, self._yaw, self._t)

    def status(self) -> MissionStatus:
        return self._status

    @property
    def trajectory(self) -> Trajectory | None:
        return self._traj

    # -- sensing -----------------------------------------------------------

    def sense(self, pose: DronePose) -> DepthScan:
        """Deterministic ray fan from the given pose against the true world."""
        if not self.world.contains(pose.position):
            raise ValueError("sense() pose must lie inside world bounds")
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        dirs = self._body_dirs @ rot.T
        ranges = ray_ranges(pose.position, dirs, self.world.obstacles, self.sensor.max_range)
        return DepthScan(
            origin=pose.position,
            directions=dirs,
            ranges=ranges,
            max_range=self.sensor.max_range,
            stamp=pose.stamp,
        )

    # -- targets -----------------------------------------------------------

    def _set_status(self, status: MissionStatus) -> None:
        self._status = status
        self.status_history.append(status)

    def accept_target(self, cmd: TargetCommand) -> MissionStatus:
        """Latest-wins target ingestion; triggers planning immediately."""
        if not self.world.contains(cmd.position):
            raise OutOfBounds(f"target {cmd.position.tolist()} outside world bounds")
        self.commands_received += 1
        self._set_status(MissionStatus(MissionState.PLANNING, cmd, 0.0))
        self._plan_to(cmd)
        return self._status

    def _plan_to(self, cmd: TargetCommand) -> None:
        try:
            if self.plan_service is not None:
                traj = self.plan_service(self._pos.copy(), cmd.position.copy())
            else:
                traj = make_trajectory(
                    [self._pos.copy(), cmd.position.copy()], self.v_max, goal=cmd.position
                )
        except (Unreachable, GoalUnknown):
            self._traj = None
            self._set_status(MissionStatus(MissionState.BLOCKED))
            return
        self._install_trajectory(traj, cmd)

    def _install_trajectory(self, traj: Trajectory, cmd: TargetCommand) -> None:
        if traj.total_length <= 1e-9 and not traj.partial:
            self._pos = traj.end.copy()
            self._traj = None
            self._set_status(MissionStatus(MissionState.REACHED))
            return
        self._traj = traj
        self._arc = 0.0
        self._seglen = np.linalg.norm(np.diff(traj.waypoints, axis=0), axis=1)
        self._set_status(MissionStatus(MissionState.FLYING, cmd, 0.0))

    # -- ticking -----------------------------------------------------------

    def _point_at_arc(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """Position and direction along the active trajectory at arc length s."""
        wp = self._traj.waypoints
        acc = 0.0
        for i, L in enumerate(self._seglen):
            if s <= acc + L or i == len(self._seglen) - 1:
                f = 0.0 if L <= 1e-12 else min(1.0, (s - acc) / L)
                d = wp[i + 1] - wp[i]
                return wp[i] + f * d, d
            acc += L
        return wp[-1], wp[-1] - wp[0]

    def _advance(self, dt: float) -> None:
        if self._traj is None:
            return
        total = float(self._seglen.sum())
        self._arc = min(total, self._arc + self.v_max * dt)
        pos, d = self._point_at_arc(self._arc)
        if self.world.obstacle_distance(pos) < self.drone_radius:
            # safe planner should prevent this; stop rather than penetrate
            self._traj = None
            self._set_status(MissionStatus(MissionState.BLOCKED))
            return
        self._pos = pos
        if np.hypot(d[0], d[1]) > 1e-9:
            self._yaw = math.atan2(d[1], d[0])
        cmd = self._status.active_target
        if self._arc >= total - 1e-12:
            finished = self._traj
            self._traj = None
            if finished.partial and cmd is not None:
                # frontier hop arrived: replan toward the original goal
                prev = self._pos.copy()
                self._plan_to(cmd)
                if (
                    self._traj is not None
                    and self._traj.partial
                    and np.linalg.norm(self._traj.end - prev) < self.world.resolution_hint
                ):
                    # hop makes no progress; give up
                    self._traj = None
                    self._set_status(MissionStatus(MissionState.BLOCKED))
            else:
                self._set_status(MissionStatus(MissionState.REACHED))
        elif cmd is not None:
            self._set_status(MissionStatus(MissionState.FLYING, cmd, self._arc / total))

    def step(self, dt: float) -> tuple[DronePose, list[DepthScan]]:
        """Advance the sim clock by dt, emitting one scan per sensor period."""
        if not dt > 0:
            raise ValueError("dt must be > 0")
        period = 1.0 / self.sensor.rate_hz
        t_end = self._t + dt
        scans: list[DepthScan] = []
        while self._next_scan_t <= t_end + 1e-12:
            sub = self._next_scan_t - self._t
            if sub > 0:
                self._advance(sub)
            self._t = self._next_scan_t
            scans.append(self.sense(self.pose()))
            self._next_scan_t += period
        if t_end - self._t > 1e-12:
            self._advance(t_end - self._t)
        self._t = t_end
        return self.pose(), scans
