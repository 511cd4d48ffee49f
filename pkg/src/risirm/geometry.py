"""Cartesian <-> RIS-local spherical conversions.

Angles follow one convention everywhere in the package: azimuth is measured
in the boresight plane from the boresight axis towards ``local_x`` and lies
in (-pi, pi]; elevation is measured from the boresight plane towards
``local_z`` and lies in [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_AXIS_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate or ill-formed geometric input."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite coordinate in {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Point3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Point3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class SphericalReading:
    distance: float
    azimuth: float
    elevation: float


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise GeometryError("zero-length axis")
    return v / n


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal frame attached to a surface or terminal.

    ``local_x`` is derived as ``boresight x local_z`` so the triple
    (local_x, boresight, local_z) is right-handed.
    """

    origin: Point3
    boresight: tuple
    local_z: tuple
    local_x: tuple

    @classmethod
    def facing(cls, origin: Point3, boresight=(0.0, 1.0, 0.0), up=(0.0, 0.0, 1.0)) -> "LocalFrame":
        b = _unit(boresight)
        up = np.asarray(up, dtype=float)
        z = up - np.dot(up, b) * b
        z = _unit(z)
        x = np.cross(b, z)
        return cls(origin, tuple(b), tuple(z), tuple(x))

    def __post_init__(self):
        b, x, z = (np.asarray(v, dtype=float) for v in (self.boresight, self.local_x, self.local_z))
        for v in (b, x, z):
            if abs(np.linalg.norm(v) - 1.0) > _AXIS_TOL:
                raise GeometryError("frame axes must be unit vectors")
        if max(abs(b @ x), abs(b @ z), abs(x @ z)) > _AXIS_TOL:
            raise GeometryError("frame axes must be mutually orthogonal")
        if np.linalg.norm(np.cross(b, z) - x) > _AXIS_TOL:
            raise GeometryError("frame must satisfy local_x = boresight x local_z")

    def rotation(self) -> np.ndarray:
        """Rows map global vectors to (local_x, boresight, local_z) components."""
        return np.array([self.local_x, self.boresight, self.local_z], dtype=float)

    def to_local(self, offsets) -> np.ndarray:
        return np.asarray(offsets, dtype=float) @ self.rotation().T

    def to_global(self, local) -> np.ndarray:
        return np.asarray(local, dtype=float) @ self.rotation()


def spherical_from_point(frame: LocalFrame, target: Point3) -> SphericalReading:
    offset = target.as_array() - frame.origin.as_array()
    d = float(np.linalg.norm(offset))
    if d == 0.0:
        raise GeometryError("degenerate geometry: target coincides with frame origin")
    lx, lb, lz = frame.to_local(offset)
    elevation = math.asin(max(-1.0, min(1.0, lz / d)))
    azimuth = math.atan2(lx, lb)
    if azimuth == -math.pi:
        azimuth = math.pi
    return SphericalReading(d, azimuth, elevation)


def spherical_from_offsets(offsets) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised variant over local-frame offsets of shape (..., 3)."""
    offsets = np.asarray(offsets, dtype=float)
    d = np.linalg.norm(offsets, axis=-1)
    if np.any(d == 0.0):
        raise GeometryError("degenerate geometry: target coincides with frame origin")
    el = np.arcsin(np.clip(offsets[..., 2] / d, -1.0, 1.0))
    az = np.arctan2(offsets[..., 0], offsets[..., 1])
    az = np.where(az == -np.pi, np.pi, az)
    return d, az, el


def unit_direction(azimuth, elevation) -> np.ndarray:
    """Unit vector in (local_x, boresight, local_z) components.

    Broadcasts over array inputs; the trailing axis holds the components.
    """
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.sin(azimuth), ce * np.cos(azimuth), np.sin(elevation)], axis=-1)


def point_from_spherical(frame: LocalFrame, reading: SphericalReading) -> Point3:
    local = unit_direction(reading.azimuth, reading.elevation) * reading.distance
    return Point3.from_array(frame.origin.as_array() + frame.to_global(local))


def boresight_angle(azimuth, elevation):
    """Angle between a link direction and the frame boresight, in [0, pi]."""
    cosang = np.cos(elevation) * np.cos(azimuth)
    return np.arccos(np.clip(cosang, -1.0, 1.0))
