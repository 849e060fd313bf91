"""Ground-truth synthetic world: axis-aligned box obstacles inside a bounded
volume, with ray queries and point-distance queries used by the sensor model
and collision checks.

World files are JSON or YAML documents:

    {"bounds": {"min": [0,0,0], "max": [5,6,3]},
     "obstacles": [{"min": [1,1,0], "max": [1.4,1.4,2]}, ...],
     "resolution_hint": 0.1}

Right-handed, Z-up, meters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml


class WorldFileError(ValueError):
    """Raised for unparseable or inconsistent world files."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, min corner inclusive."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise WorldFileError("box corners must be 3-vectors")
        if not np.all(hi > lo):
            raise WorldFileError(f"degenerate box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def distance(self, p) -> float:
        """Euclidean distance from a point to the box surface; 0 inside."""
        p = np.asarray(p, dtype=float)
        d = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        return float(np.linalg.norm(d))

    def intersects(self, other: "Box") -> bool:
        return bool(np.all(self.hi >= other.lo) and np.all(self.lo <= other.hi))

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}


@dataclass(frozen=True)
class WorldModel:
    """Bounded volume plus axis-aligned box obstacles."""

    bounds: Box
    obstacles: tuple[Box, ...] = field(default_factory=tuple)
    resolution_hint: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.resolution_hint > 0.0:
            raise WorldFileError("resolution_hint must be > 0")
        for b in self.obstacles:
            if not b.intersects(self.bounds):
                raise WorldFileError(f"obstacle {b.to_dict()} lies outside bounds")

    def contains(self, p) -> bool:
        return self.bounds.contains(p)

    def obstacle_distance(self, p) -> float:
        """Distance to the nearest obstacle surface; inf with no obstacles."""
        if not self.obstacles:
            return float("inf")
        return min(b.distance(p) for b in self.obstacles)

    def in_free_space(self, p, margin: float = 0.0) -> bool:
        return self.contains(p) and self.obstacle_distance(p) > margin

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.to_dict(),
            "obstacles": [b.to_dict() for b in self.obstacles],
            "resolution_hint": self.resolution_hint,
        }


def _box_from_doc(doc) -> Box:
    try:
        return Box(np.asarray(doc["min"], float), np.asarray(doc["max"], float))
    except (KeyError, TypeError) as e:
        raise WorldFileError(f"bad box document {doc!r}") from e


def world_from_dict(doc: dict) -> WorldModel:
    if not isinstance(doc, dict) or "bounds" not in doc:
        raise WorldFileError("world document must be a mapping with a 'bounds' key")
    return WorldModel(
        bounds=_box_from_doc(doc["bounds"]),
        obstacles=tuple(_box_from_doc(b) for b in doc.get("obstacles", [])),
        resolution_hint=float(doc.get("resolution_hint", 0.1)),
    )


def load_world(path) -> WorldModel:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise WorldFileError(f"{path}: {e}") from e
    return world_from_dict(doc)


def ray_ranges(origin, directions, boxes, max_range: float) -> np.ndarray:
    """Batched slab test: distance along each ray to the first box hit.

    directions must be unit vectors, shape (N, 3). Returns shape (N,) ranges;
    rays that hit nothing within max_range get max_range exactly.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.asarray(directions, dtype=float)
    n = d.shape[0]
    best = np.full(n, max_range)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(d != 0.0, 1.0 / d, np.inf)
        for box in boxes:
            t1 = (box.lo - origin) * inv
            t2 = (box.hi - origin) * inv
            # axis parallel to a slab: hit iff origin within the slab
            par = d == 0.0
            inside = (origin >= box.lo) & (origin <= box.hi)
            lo = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
            hi = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
            tmin = lo.max(axis=1)
            tmax = hi.min(axis=1)
            hit = (tmax >= tmin) & (tmax >= 0.0)
            t = np.where(tmin >= 0.0, tmin, 0.0)
            best = np.where(hit & (t < best), t, best)
    return best
