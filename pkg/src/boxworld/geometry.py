"""Small 3D/2D geometry helpers shared across the package.

Conventions: y is up, the floor is the XZ plane.  Yaw is degrees, 0 faces +z,
positive turns clockwise viewed from above (to the right), normalized to
[-180, 180).  A floor rect is a tuple (min_x, min_z, max_x, max_z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

Rect = tuple[float, float, float, float]


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def __add__(self, o: "Vec3") -> "Vec3":  # type: ignore[override]
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def length(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def planar_distance(self, o: "Vec3") -> float:
        return math.hypot(self.x - o.x, self.z - o.z)

    def is_finite(self) -> bool:
        return all(math.isfinite(c) for c in self)


@dataclass(frozen=True)
class AABB:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        if not (self.min.x <= self.max.x and self.min.y <= self.max.y and self.min.z <= self.max.z):
            raise ValueError(f"AABB min must be <= max componentwise: {self}")

    @property
    def center(self) -> Vec3:
        return Vec3((self.min.x + self.max.x) / 2, (self.min.y + self.max.y) / 2,
                    (self.min.z + self.max.z) / 2)

    def footprint(self) -> Rect:
        return (self.min.x, self.min.z, self.max.x, self.max.z)

    def intersects(self, o: "AABB") -> bool:
        """Strict interior overlap; shared faces do not count."""
        return (self.min.x < o.max.x and o.min.x < self.max.x
                and self.min.y < o.max.y and o.min.y < self.max.y
                and self.min.z < o.max.z and o.min.z < self.max.z)


def normalize_yaw(yaw: float) -> float:
    """Map to [-180, 180)."""
    return (yaw + 180.0) % 360.0 - 180.0


def yaw_direction(yaw: float) -> tuple[float, float]:
    """Unit floor-plane direction (dx, dz) for a yaw in degrees."""
    r = math.radians(yaw)
    return math.sin(r), math.cos(r)


def bearing_deg(from_x: float, from_z: float, to_x: float, to_z: float) -> float:
    """Yaw that faces (to) from (from)."""
    return normalize_yaw(math.degrees(math.atan2(to_x - from_x, to_z - from_z)))


def signed_yaw_delta(from_yaw: float, to_yaw: float) -> float:
    """Shortest signed rotation taking from_yaw to to_yaw, in [-180, 180)."""
    return normalize_yaw(to_yaw - from_yaw)


def rotated_footprint_half_extents(hx: float, hz: float, yaw: float) -> tuple[float, float]:
    """Half extents of the world-axis-aligned box enclosing a yaw-rotated box.

    Exact for yaw multiples of 90 so the procedural generator stays free of
    platform trig.
    """
    q = yaw % 360.0
    if q in (0.0, 180.0):
        return hx, hz
    if q in (90.0, 270.0):
        return hz, hx
    r = math.radians(yaw)
    c, s = abs(math.cos(r)), abs(math.sin(r))
    return hx * c + hz * s, hx * s + hz * c


def rect_contains(rect: Rect, x: float, z: float) -> bool:
    """Half-open containment: [min, max) on both axes."""
    return rect[0] <= x < rect[2] and rect[1] <= z < rect[3]


def rect_contains_rect(outer: Rect, inner: Rect, eps: float = 1e-9) -> bool:
    return (inner[0] >= outer[0] - eps and inner[1] >= outer[1] - eps
            and inner[2] <= outer[2] + eps and inner[3] <= outer[3] + eps)


def rects_overlap_strict(a: Rect, b: Rect) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def rect_inflate(rect: Rect, amount: float) -> Rect:
    return (rect[0] - amount, rect[1] - amount, rect[2] + amount, rect[3] + amount)


def point_rect_distance(x: float, z: float, rect: Rect) -> float:
    dx = max(rect[0] - x, 0.0, x - rect[2])
    dz = max(rect[1] - z, 0.0, z - rect[3])
    return math.hypot(dx, dz)


def circle_rect_intersects(cx: float, cz: float, radius: float, rect: Rect) -> bool:
    return point_rect_distance(cx, cz, rect) < radius


def point_segment_distance(px: float, pz: float, ax: float, az: float,
                           bx: float, bz: float) -> float:
    vx, vz = bx - ax, bz - az
    seg_len2 = vx * vx + vz * vz
    if seg_len2 <= 0.0:
        return math.hypot(px - ax, pz - az)
    t = ((px - ax) * vx + (pz - az) * vz) / seg_len2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * vx), pz - (az + t * vz))
