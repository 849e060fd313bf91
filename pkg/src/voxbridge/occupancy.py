"""Sparse voxel occupancy grid updated by raycasting depth scans.

Storage is a hash of fixed-size dense blocks so integration of a 1k-ray scan
stays vectorized while the map behaves like an unbounded drone map. A voxel's
world-space center is ``(i + 0.5) * resolution`` per axis; a point belongs to
voxel ``floor(p / resolution)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# log-odds update model; occupied iff L >= OCC_THRESHOLD on a touched voxel
LOG_ODDS_HIT = 0.85
LOG_ODDS_MISS = -0.4
LOG_ODDS_MIN = -3.5
LOG_ODDS_MAX = 3.5
OCC_THRESHOLD = 0.0
FREE_THRESHOLD = -0.2

BLOCK = 16  # voxels per block edge
_SHIFT = 4  # log2(BLOCK)

# height gradient endpoints (ground -> top), monotone in hue
COLOR_GROUND = np.array([0.12, 0.35, 0.90])
COLOR_TOP = np.array([0.95, 0.30, 0.10])

UNKNOWN, FREE, OCCUPIED = "unknown", "free", "occupied"


@dataclass(frozen=True)
class VoxelSnapshot:
    """Immutable copy of the occupied set at one revision."""

    resolution: float
    occupied: np.ndarray  # (N, 3) int64 voxel indices
    revision: int
    pose: object = None  # DronePose at capture, opaque here

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=np.int64).reshape(-1, 3)
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)


def traverse_segments(starts, ends, resolution: float):
    """Exact voxel traversal of line segments (Amanatides-Woo stepping).

    starts/ends: (N, 3) float arrays. Returns (voxels, ray_index):
    voxels (M, 3) int64 and the index of the segment that visited each row.
    Per segment the visited voxels are emitted in traversal order, starting
    at floor(start/res) and ending at floor(end/res). Ties in the step
    choice resolve toward the smaller axis index.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    ends = np.atleast_2d(np.asarray(ends, dtype=float))
    if starts.shape[0] == 1 and ends.shape[0] > 1:
        starts = np.broadcast_to(starts, ends.shape).copy()
    n = starts.shape[0]
    cur = np.floor(starts / resolution).astype(np.int64)
    endv = np.floor(ends / resolution).astype(np.int64)
    d = ends - starts
    step = np.sign(d).astype(np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (cur + (d > 0)) * resolution
        tmax = np.where(d != 0.0, (bound - starts) / d, np.inf)
        tdelta = np.where(d != 0.0, resolution / np.abs(d), np.inf)

    out_vox = [cur.copy()]
    out_ray = [np.arange(n)]
    active = (cur != endv).any(axis=1)
    # each active iteration crosses exactly one face, so L1 distance bounds it
    guard = int(np.abs(endv - cur).sum(axis=1).max(initial=0)) + 1
    for _ in range(guard):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ax = np.argmin(tmax[idx], axis=1)
        cur[idx, ax] += step[idx, ax]
        tmax[idx, ax] += tdelta[idx, ax]
        out_vox.append(cur[idx].copy())
        out_ray.append(idx)
        active[idx] = (cur[idx] != endv[idx]).any(axis=1)
    return np.concatenate(out_vox), np.concatenate(out_ray)


def traverse_segment(start, end, resolution: float) -> np.ndarray:
    """Visited voxels of a single segment, in order, shape (M, 3)."""
    vox, _ = traverse_segments(np.asarray(start)[None], np.asarray(end)[None], resolution)
    return vox


def height_color(v, resolution: float, z_min: float, z_max: float) -> np.ndarray:
    """RGB in [0,1]^3 from the voxel center height, linear between endpoints."""
    if not z_min < z_max:
        raise ValueError("z_min must be < z_max")
    iz = np.asarray(v, dtype=float)[..., 2]
    z = (iz + 0.5) * resolution
    f = np.clip((z - z_min) / (z_max - z_min), 0.0, 1.0)
    return COLOR_GROUND + np.multiply.outer(f, COLOR_TOP - COLOR_GROUND)


def pack_voxels(vox: np.ndarray) -> np.ndarray:
    """Injective int64 key per voxel for |index| < 2^20."""
    v = np.asarray(vox, dtype=np.int64)
    return (v[..., 0] << 42) + (v[..., 1] << 21) + v[..., 2]


class OccupancyGrid:
    """Log-odds voxel map with single-writer integration and cheap snapshots."""

    def __init__(
        self,
        resolution: float = 0.1,
        l_hit: float = LOG_ODDS_HIT,
        l_miss: float = LOG_ODDS_MISS,
        l_min: float = LOG_ODDS_MIN,
        l_max: float = LOG_ODDS_MAX,
        occ_threshold: float = OCC_THRESHOLD,
        free_threshold: float = FREE_THRESHOLD,
    ):
        if not resolution > 0:
            raise ValueError("resolution must be > 0")
        self.resolution = resolution
        self.l_hit = l_hit
        self.l_miss = l_miss
        self.l_min = l_min
        self.l_max = l_max
        self.occ_threshold = occ_threshold
        self.free_threshold = free_threshold
        self.revision = 0
        # block key -> (log-odds float64[B,B,B], touched bool[B,B,B])
        self._blocks: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}

    def _block(self, key):
        blk = self._blocks.get(key)
        if blk is None:
            blk = (
                np.zeros((BLOCK, BLOCK, BLOCK), dtype=np.float64),
                np.zeros((BLOCK, BLOCK, BLOCK), dtype=bool),
            )
            self._blocks[key] = blk
        return blk

    def apply_updates(self, voxels: np.ndarray, deltas: np.ndarray) -> int:
        """Add deltas to voxels (one mutation batch), clamping to [l_min, l_max]."""
        voxels = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
        deltas = np.asarray(deltas, dtype=float).reshape(-1)
        if voxels.size:
            bkeys = voxels >> _SHIFT  # arithmetic shift == floor division
            offs = voxels - (bkeys << _SHIFT)
            order = np.lexsort((bkeys[:, 2], bkeys[:, 1], bkeys[:, 0]))
            bkeys, offs, dd = bkeys[order], offs[order], deltas[order]
            change = np.flatnonzero(np.any(bkeys[1:] != bkeys[:-1], axis=1)) + 1
            bounds = np.concatenate(([0], change, [len(bkeys)]))
            for a, b in zip(bounds[:-1], bounds[1:]):
                vals, touched = self._block(tuple(int(c) for c in bkeys[a]))
                o = offs[a:b]
                np.add.at(vals, (o[:, 0], o[:, 1], o[:, 2]), dd[a:b])
                np.clip(vals, self.l_min, self.l_max, out=vals)
                touched[o[:, 0], o[:, 1], o[:, 2]] = True
        self.revision += 1
        return self.revision

    def integrate_scan(self, scan, pose=None) -> int:
        """Raycast one depth scan into the grid, returning the new revision.

        Every voxel strictly between the origin and a hit point is given the
        free-space decrement; the hit voxel (finite-range rays only) gets the
        occupancy increment. Max-range rays decrement their whole traversal.
        """
        origin = np.asarray(scan.origin, dtype=float)
        if pose is not None and not np.allclose(origin, pose.position):
            raise ValueError("scan origin must equal the integrating pose position")
        dirs = np.asarray(scan.directions, dtype=float)
        ranges = np.asarray(scan.ranges, dtype=float)
        ends = origin[None, :] + dirs * ranges[:, None]
        vox, ray = traverse_segments(origin[None, :], ends, self.resolution)
        finite = ranges < scan.max_range - 1e-12
        # the last visited row per ray is that ray's hit voxel
        last_of_ray = np.zeros(len(ranges), dtype=np.int64)
        np.maximum.at(last_of_ray, ray, np.arange(len(ray)))
        is_hit = np.zeros(len(ray), dtype=bool)
        is_hit[last_of_ray[finite]] = True

        deltas = np.where(is_hit, self.l_hit, self.l_miss)
        uniq, inv = np.unique(pack_voxels(vox), return_inverse=True)
        acc = np.zeros(len(uniq))
        np.add.at(acc, inv, deltas)
        rep = np.zeros(len(uniq), dtype=np.int64)
        rep[inv] = np.arange(len(inv))  # any representative row per unique voxel
        return self.apply_updates(vox[rep], acc)

    def log_odds(self, v) -> float:
        v = np.asarray(v, dtype=np.int64)
        key = (int(v[0]) >> _SHIFT, int(v[1]) >> _SHIFT, int(v[2]) >> _SHIFT)
        blk = self._blocks.get(key)
        if blk is None:
            return 0.0
        o = v - (np.asarray(key, dtype=np.int64) << _SHIFT)
        return float(blk[0][o[0], o[1], o[2]])

    def is_touched(self, v) -> bool:
        v = np.asarray(v, dtype=np.int64)
        key = (int(v[0]) >> _SHIFT, int(v[1]) >> _SHIFT, int(v[2]) >> _SHIFT)
        blk = self._blocks.get(key)
        if blk is None:
            return False
        o = v - (np.asarray(key, dtype=np.int64) << _SHIFT)
        return bool(blk[1][o[0], o[1], o[2]])

    def classify(self, v) -> str:
        if not self.is_touched(v):
            return UNKNOWN
        lo = self.log_odds(v)
        if lo >= self.occ_threshold:
            return OCCUPIED
        if lo <= self.free_threshold:
            return FREE
        return UNKNOWN

    def _collect(self, predicate) -> np.ndarray:
        found = []
        for key, (vals, touched) in self._blocks.items():
            sel = np.argwhere(predicate(vals) & touched)
            if len(sel):
                base = np.asarray(key, dtype=np.int64) << _SHIFT
                found.append(base[None, :] + sel)
        if not found:
            return np.empty((0, 3), dtype=np.int64)
        out = np.concatenate(found)
        return out[np.lexsort((out[:, 2], out[:, 1], out[:, 0]))]

    def occupied_voxels(self) -> np.ndarray:
        return self._collect(lambda v: v >= self.occ_threshold)

    def free_voxels(self) -> np.ndarray:
        return self._collect(lambda v: v <= self.free_threshold)

    def known_voxel_count(self) -> int:
        occ, fre = self.occ_threshold, self.free_threshold
        return int(
            sum(
                int((((v >= occ) | (v <= fre)) & t).sum())
                for v, t in self._blocks.values()
            )
        )

    def snapshot(self, pose=None) -> VoxelSnapshot:
        """Immutable copy of the currently-occupied set."""
        return VoxelSnapshot(
            resolution=self.resolution,
            occupied=self.occupied_voxels(),
            revision=self.revision,
            pose=pose,
        )
