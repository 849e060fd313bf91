"""Map-frame to world-frame similarity transform shared by server and console.

A rendered map point p (meters, drone/map frame) appears in the operator's
world at ``s * R(yaw) * p + origin`` where R is a right-handed rotation
about +Z. Conventions everywhere: right-handed, Z-up, meters, radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidScale(ValueError):
    """Raised when a transform scale is not strictly positive."""


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    y = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if y <= 0.0:
        y += 2.0 * math.pi
    return y - math.pi


@dataclass(frozen=True)
class MapFrameTransform:
    """Scale, yaw and anchored origin of the rendered map."""

    s: float = 1.0
    yaw: float = 0.0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.s > 0.0:
            raise InvalidScale(f"scale must be > 0, got {self.s}")
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Default scale on console connect: a 5x6 m world lands on a 25x30 cm tabletop.
DEFAULT_SCALE = 0.05


def map_to_world(p, t: MapFrameTransform) -> np.ndarray:
    """Project a map-frame point into the operator's world frame."""
    p = np.asarray(p, dtype=float)
    return t.s * (p @ t.rotation.T) + np.asarray(t.origin)


def world_to_map(p, t: MapFrameTransform) -> np.ndarray:
    """Exact inverse of :func:`map_to_world`."""
    p = np.asarray(p, dtype=float)
    return ((p - np.asarray(t.origin)) @ t.rotation) / t.s


def retarget_anchor(
    t: MapFrameTransform,
    new_origin=None,
    new_yaw: float | None = None,
    new_s: float | None = None,
) -> MapFrameTransform:
    """Return a transform with replaced anchor parameters.

    Map-frame geometry is untouched; rendered objects are simply
    re-projected through the returned transform.
    """
    s = t.s if new_s is None else new_s
    if not s > 0.0:
        raise InvalidScale(f"scale must be > 0, got {s}")
    yaw = t.yaw if new_yaw is None else new_yaw
    origin = t.origin if new_origin is None else tuple(float(c) for c in new_origin)
    return MapFrameTransform(s=s, yaw=yaw, origin=origin)
