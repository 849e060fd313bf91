"""Shared independent oracles for the test suite.

These stay deliberately naive (sampling, enumeration, all-pairs) and never
call into the code paths they check.
"""

import numpy as np
import pytest


def sampled_voxels(start, end, resolution, step=None):
    """Voxels containing fixed-step sample points along a segment."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    length = np.linalg.norm(end - start)
    if step is None:
        step = resolution / 100.0
    n = max(2, int(np.ceil(length / step)) + 1)
    t = np.linspace(0.0, 1.0, n)
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    return set(map(tuple, np.floor(pts / resolution).astype(np.int64)))


def segment_voxels_exact(start, end, resolution, tol=1e-12):
    """All voxels a segment passes through, by recursive bisection.

    Refines between consecutive sample points until they land in the same or
    face-adjacent voxels, so every voxel with a non-degenerate chord is found
    without any grid-stepping logic.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)

    def vox(p):
        return tuple(np.floor(p / resolution).astype(np.int64))

    out = set()

    def recurse(p0, p1, v0, v1, depth):
        out.add(v0)
        out.add(v1)
        if v0 == v1 or depth > 60 or float(np.linalg.norm(p1 - p0)) < tol:
            return
        mid = 0.5 * (p0 + p1)
        vm = vox(mid)
        recurse(p0, mid, v0, vm, depth + 1)
        recurse(mid, p1, vm, v1, depth + 1)

    recurse(start, end, vox(start), vox(end), 0)
    return out


def brute_force_esdf(occupied, region_lo, shape, resolution, d_max):
    """All-pairs distance minimum: O(cells * occupied)."""
    nx, ny, nz = shape
    lo = np.asarray(region_lo, dtype=np.int64)
    gx, gy, gz = np.meshgrid(
        np.arange(nx) + lo[0], np.arange(ny) + lo[1], np.arange(nz) + lo[2], indexing="ij"
    )
    cells = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3).astype(float)
    occ = np.asarray(occupied, dtype=float).reshape(-1, 3)
    if len(occ) == 0:
        return np.full(shape, d_max)
    best = np.full(len(cells), np.inf)
    for chunk in np.array_split(occ, max(1, len(occ) // 256)):
        d2 = ((cells[:, None, :] - chunk[None, :, :]) ** 2).sum(axis=2)
        best = np.minimum(best, d2.min(axis=1))
    dist = np.sqrt(best) * resolution
    return np.minimum(dist, d_max).reshape(shape)


def brute_force_hausdorff(a, b):
    """Double-max over the full pairwise distance table, no vectorized tricks."""
    import math

    def d(p, q):
        return math.dist(tuple(p), tuple(q))

    fwd = max(min(d(p, q) for q in b) for p in a)
    bwd = max(min(d(p, q) for p in a) for q in b)
    return max(fwd, bwd)


def dijkstra_path_cost(traversable, esdf_values, start, goal, resolution,
                       soft_clearance, repulsion_weight):
    """Plain Dijkstra over the 26-connected graph with the planner's edge cost."""
    import heapq

    offsets = [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
    ]
    shape = traversable.shape
    dist = {tuple(start): 0.0}
    heap = [(0.0, tuple(start))]
    done = set()
    goal = tuple(goal)
    while heap:
        g, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        if cur == goal:
            return g
        for off in offsets:
            nbr = (cur[0] + off[0], cur[1] + off[1], cur[2] + off[2])
            if not all(0 <= nbr[i] < shape[i] for i in range(3)):
                continue
            if not traversable[nbr]:
                continue
            step = float(np.linalg.norm(off)) * resolution
            soft = soft_clearance - esdf_values[nbr]
            cost = step + (repulsion_weight * soft * step if soft > 0 else 0.0)
            ng = g + cost
            if ng < dist.get(nbr, np.inf):
                dist[nbr] = ng
                heapq.heappush(heap, (ng, nbr))
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
