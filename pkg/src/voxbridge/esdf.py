"""Exact Euclidean distance field over the occupied voxel set.

Rebuilt per planning request with the 3-pass separable squared-distance
transform (lower-envelope-of-parabolas 1D step), truncated at d_max.
Distances are voxel-center to voxel-center, in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

_INF = 1e18


class EmptyRegion(ValueError):
    """Raised when the requested region has no voxels."""


@dataclass(frozen=True)
class IndexBox:
    """Inclusive axis-aligned box of voxel indices."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(c) for c in self.lo)
        hi = tuple(int(c) for c in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if any(h < l for l, h in zip(lo, hi)):
            raise EmptyRegion(f"empty index region {lo}..{hi}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))


@njit(cache=True)
def _edt_1d(f, out, v, z):
    """Squared distance transform of one line (lower envelope of parabolas)."""
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -_INF
    z[1] = _INF
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = (q - v[k]) ** 2 + f[v[k]]


@njit(cache=True)
def _edt_3d(f):
    """In-place 3-pass squared EDT of f (0 on seeds, _INF elsewhere)."""
    nx, ny, nz = f.shape
    nmax = max(nx, max(ny, nz))
    buf = np.empty(nmax)
    out = np.empty(nmax)
    v = np.empty(nmax, dtype=np.int64)
    z = np.empty(nmax + 1)
    for y in range(ny):
        for zz in range(nz):
            for x in range(nx):
                buf[x] = f[x, y, zz]
            _edt_1d(buf[:nx], out[:nx], v, z)
            for x in range(nx):
                f[x, y, zz] = out[x]
    for x in range(nx):
        for zz in range(nz):
            for y in range(ny):
                buf[y] = f[x, y, zz]
            _edt_1d(buf[:ny], out[:ny], v, z)
            for y in range(ny):
                f[x, y, zz] = out[y]
    for x in range(nx):
        for y in range(ny):
            for zz in range(nz):
                buf[zz] = f[x, y, zz]
            _edt_1d(buf[:nz], out[:nz], v, z)
            for zz in range(nz):
                f[x, y, zz] = out[zz]


@dataclass(frozen=True)
class EsdfGrid:
    """Per-voxel distance to the nearest occupied voxel center, meters."""

    resolution: float
    region: IndexBox
    values: np.ndarray  # float64, shape == region.shape
    d_max: float
    source_revision: int = 0

    def __post_init__(self):
        self.values.setflags(write=False)

    def distance_at(self, v) -> float:
        """Distance at a voxel index; d_max outside the region."""
        i = np.asarray(v, dtype=np.int64) - np.asarray(self.region.lo, dtype=np.int64)
        if np.any(i < 0) or np.any(i >= np.asarray(self.region.shape)):
            return self.d_max
        return float(self.values[i[0], i[1], i[2]])

    def distance_at_points(self, pts) -> np.ndarray:
        """Nearest-voxel distance lookup for world-space points, vectorized."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = np.floor(pts / self.resolution).astype(np.int64)
        idx -= np.asarray(self.region.lo, dtype=np.int64)
        shape = np.asarray(self.region.shape)
        inside = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.full(len(pts), self.d_max)
        ii = idx[inside]
        out[inside] = self.values[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out


def build(snapshot, region: IndexBox, d_max: float = 2.0) -> EsdfGrid:
    """Exact truncated Euclidean distance field over a voxel index region.

    Occupied voxels outside the region still influence distances inside it;
    the transform runs on the region dilated by ceil(d_max / resolution) so
    truncation at d_max stays exact.
    """
    if not d_max > 0:
        raise ValueError("d_max must be > 0")
    res = snapshot.resolution
    pad = int(math.ceil(d_max / res))
    lo = np.asarray(region.lo, dtype=np.int64) - pad
    hi = np.asarray(region.hi, dtype=np.int64) + pad
    shape = tuple(int(c) for c in hi - lo + 1)

    f = np.full(shape, _INF)
    occ = np.asarray(snapshot.occupied, dtype=np.int64).reshape(-1, 3)
    if len(occ):
        rel = occ - lo
        keep = np.all((rel >= 0) & (rel < np.asarray(shape)), axis=1)
        rel = rel[keep]
        f[rel[:, 0], rel[:, 1], rel[:, 2]] = 0.0
    _edt_3d(f)
    dist = np.sqrt(f) * res
    np.minimum(dist, d_max, out=dist)
    sl = tuple(slice(pad, pad + s) for s in region.shape)
    return EsdfGrid(
        resolution=res,
        region=region,
        values=np.ascontiguousarray(dist[sl]),
        d_max=d_max,
        source_revision=snapshot.revision,
    )
