"""Collision-free path generation over the distance field, plus smoothing.

A* runs on the 26-connected graph of traversable voxels (known free and with
enough clearance). Edge cost is Euclidean step length plus a soft repulsion
term near obstacles. Smoothing is deterministic greedy shortcutting with the
same clearance check at dense samples.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .esdf import EsdfGrid

SOFT_CLEARANCE = 0.6  # meters; repulsion fades to zero beyond this
REPULSION_WEIGHT = 2.0
SNAP_RADIUS = 1.0  # meters; max goal snap distance before giving up

# voxel discretization pad: center-to-center distances understate point-to-
# surface distances by up to sqrt(3)*resolution, of which 0.5*resolution is
# already absorbed by the acceptance margin
CLEARANCE_PAD_VOXELS = math.sqrt(3.0) - 0.5


class Unreachable(RuntimeError):
    """No path to the goal exists within known free space."""


class GoalUnknown(RuntimeError):
    """Goal voxel is unmapped and no known-free voxel can stand in for it."""


_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1) if (dx, dy, dz) != (0, 0, 0)],
    dtype=np.int64,
)
_OFFSET_LEN = np.linalg.norm(_OFFSETS, axis=1)


@dataclass(frozen=True)
class PlanRequest:
    """Inputs for one planning query. Positions are world-frame meters.

    known_free marks voxels observed free, aligned with esdf.region; unknown
    voxels are untraversable, except that a goal in unknown space reroutes to
    the nearest traversable voxel (frontier hop).
    """

    start: np.ndarray
    goal: np.ndarray
    clearance: float
    esdf: EsdfGrid
    known_free: np.ndarray
    speed: float = 1.0
    snap_radius: float = SNAP_RADIUS

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Waypoints with constant-speed timestamps."""

    waypoints: np.ndarray  # (N, 3)
    timestamps: np.ndarray  # (N,)
    total_length: float
    partial: bool = False  # True when this is a frontier hop toward the goal
    goal: np.ndarray | None = None  # the originally requested goal

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        wp.setflags(write=False)
        ts.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "timestamps", ts)
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) if len(self.timestamps) else 0.0


def _timestamps(waypoints: np.ndarray, speed: float) -> tuple[np.ndarray, float]:
    if len(waypoints) == 1:
        return np.zeros(1), 0.0
    seg = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    total = float(seg.sum())
    t = np.concatenate(([0.0], np.cumsum(np.maximum(seg, 1e-12)))) / speed
    return t, total


def make_trajectory(waypoints, speed: float, partial=False, goal=None) -> Trajectory:
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    ts, total = _timestamps(wp, speed)
    return Trajectory(wp, ts, total, partial=partial, goal=goal)


def effective_clearance(clearance: float, resolution: float) -> float:
    return clearance + CLEARANCE_PAD_VOXELS * resolution


@dataclass
class _Grid:
    """Traversability view of one plan request."""

    lo: np.ndarray
    shape: tuple[int, int, int]
    traversable: np.ndarray
    esdf_values: np.ndarray
    resolution: float
    occupied: np.ndarray = field(init=False)

    def __post_init__(self):
        self.occupied = self.esdf_values <= 1e-12

    def to_cell(self, p) -> np.ndarray:
        return np.floor(np.asarray(p, dtype=float) / self.resolution).astype(np.int64) - self.lo

    def center(self, cell) -> np.ndarray:
        return (np.asarray(cell, dtype=float) + self.lo + 0.5) * self.resolution

    def in_range(self, cell) -> bool:
        return bool(np.all(cell >= 0) and np.all(cell < np.asarray(self.shape)))


def _grid_view(req: PlanRequest) -> _Grid:
    eff = effective_clearance(req.clearance, req.esdf.resolution)
    trav = req.known_free & (req.esdf.values >= eff)
    return _Grid(
        lo=np.asarray(req.esdf.region.lo, dtype=np.int64),
        shape=req.esdf.region.shape,
        traversable=trav,
        esdf_values=req.esdf.values,
        resolution=req.esdf.resolution,
    )


def _nearest_traversable(grid: _Grid, p, max_dist: float | None) -> np.ndarray | None:
    """Traversable cell nearest to world point p, lexicographic tie-break."""
    cells = np.argwhere(grid.traversable)
    if len(cells) == 0:
        return None
    centers = (cells + grid.lo + 0.5) * grid.resolution
    d = np.linalg.norm(centers - np.asarray(p, dtype=float), axis=1)
    best = float(d.min())
    if max_dist is not None and best > max_dist:
        return None
    tied = cells[np.abs(d - best) < 1e-12]
    return tied[np.lexsort((tied[:, 2], tied[:, 1], tied[:, 0]))][0]


def _astar(grid: _Grid, start_cell, goal_cell) -> list[np.ndarray]:
    """Deterministic A*: f then h then lexicographic flat index."""
    nx, ny, nz = grid.shape
    res = grid.resolution

    def flat(c):
        return (c[0] * ny + c[1]) * nz + c[2]

    goal = np.asarray(goal_cell, dtype=np.int64)
    sc = tuple(int(c) for c in start_cell)
    gc = tuple(int(c) for c in goal_cell)

    def h(c):
        return float(np.linalg.norm((np.asarray(c) - goal)) * res)

    g_best = {sc: 0.0}
    parent = {sc: None}
    open_heap = [(h(sc), h(sc), flat(sc), sc)]
    closed = set()
    esdf = grid.esdf_values
    trav = grid.traversable
    while open_heap:
        _, _, _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        closed.add(cur)
        if cur == gc:
            path = []
            node = cur
            while node is not None:
                path.append(np.asarray(node, dtype=np.int64))
                node = parent[node]
            return path[::-1]
        cx, cy, cz = cur
        gcur = g_best[cur]
        for k in range(26):
            ox, oy, oz = _OFFSETS[k]
            nbr = (cx + ox, cy + oy, cz + oz)
            if not (0 <= nbr[0] < nx and 0 <= nbr[1] < ny and 0 <= nbr[2] < nz):
                continue
            if not trav[nbr]:
                continue
            step = _OFFSET_LEN[k] * res
            soft = SOFT_CLEARANCE - esdf[nbr]
            cost = step + (REPULSION_WEIGHT * soft * step if soft > 0.0 else 0.0)
            ng = gcur + cost
            if ng < g_best.get(nbr, math.inf) - 1e-15:
                g_best[nbr] = ng
                parent[nbr] = cur
                hn = h(nbr)
                heapq.heappush(open_heap, (ng + hn, hn, flat(nbr), nbr))
    raise Unreachable(f"no path from cell {sc} to cell {gc}")


def plan(req: PlanRequest) -> Trajectory:
    """Shortest-found safe path from start to goal, densified to waypoints.

    Goal handling: a goal voxel that is known but not traversable snaps to
    the nearest traversable voxel within snap_radius (Unreachable if none);
    a goal voxel in unknown space routes to the nearest traversable voxel
    instead and the result is marked partial (frontier hop).
    """
    grid = _grid_view(req)
    start_cell = grid.to_cell(req.start)
    goal_cell = grid.to_cell(req.goal)
    if not grid.in_range(start_cell) or not grid.traversable[tuple(start_cell)]:
        raise Unreachable("start is not in traversable known free space")

    if np.array_equal(start_cell, goal_cell):
        if np.allclose(req.start, req.goal):
            return make_trajectory([req.start], req.speed, goal=req.goal)
        return make_trajectory([req.start, req.goal], req.speed, goal=req.goal)

    partial = False
    goal_point = req.goal
    known = grid.in_range(goal_cell) and (
        req.known_free[tuple(goal_cell)] or grid.occupied[tuple(goal_cell)]
    )
    if not grid.in_range(goal_cell) or not grid.traversable[tuple(goal_cell)]:
        if known:
            snapped = _nearest_traversable(grid, req.goal, req.snap_radius)
            if snapped is None:
                raise Unreachable("no traversable voxel within snap radius of goal")
        else:
            snapped = _nearest_traversable(grid, req.goal, None)
            if snapped is None:
                raise GoalUnknown("no traversable voxel toward unknown goal")
            partial = True
        goal_cell = snapped
        goal_point = grid.center(goal_cell)

    cells = _astar(grid, start_cell, goal_cell)
    pts = [req.start] + [grid.center(c) for c in cells[1:]]
    # end exactly on the requested point when it shares the goal cell
    if not partial and np.array_equal(grid.to_cell(goal_point), goal_cell):
        pts[-1] = goal_point
    wp = [pts[0]]
    for p in pts[1:]:
        if np.linalg.norm(p - wp[-1]) > 1e-12:
            wp.append(p)
    return make_trajectory(wp, req.speed, partial=partial, goal=req.goal)


def _segment_clear(esdf: EsdfGrid, a, b, clearance_eff: float) -> bool:
    length = float(np.linalg.norm(b - a))
    n = max(2, int(math.ceil(length / (esdf.resolution / 2.0))) + 1)
    t = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return bool(np.all(esdf.distance_at_points(pts) >= clearance_eff))


def smooth(traj: Trajectory, esdf: EsdfGrid, clearance: float) -> Trajectory:
    """Greedy shortcut smoothing; never lengthens, never loses clearance.

    Every intermediate sample (<= resolution/2 spacing) of every kept segment
    keeps the same effective clearance the planner used.
    """
    wp = traj.waypoints
    if len(wp) <= 2:
        return traj
    eff = effective_clearance(clearance, esdf.resolution)
    speed = traj.total_length / traj.duration if traj.duration > 0 else 1.0
    out = [wp[0]]
    i = 0
    while i < len(wp) - 1:
        j = len(wp) - 1
        while j > i + 1 and not _segment_clear(esdf, wp[i], wp[j], eff):
            j -= 1
        out.append(wp[j])
        i = j
    new = make_trajectory(out, speed, partial=traj.partial, goal=traj.goal)
    if new.total_length <= traj.total_length + 1e-12:
        return new
    return traj
