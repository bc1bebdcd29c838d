"""Camera models, rigid poses, and ray generation for panoramic imagery.

Coordinate conventions (shared by every module in the package):

  - Frames are right-handed with +y up and +z forward.
  - Longitude theta is measured from +z toward +x, in [-pi, pi).
  - Latitude phi is measured from the horizon toward +y, in [-pi/2, pi/2].
  - A direction is d = (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta)).
  - Image coordinates: u grows rightward (longitude), v grows downward
    (latitude decreasing).  The pixel with index (x, y) samples the
    continuous coordinate (u, v) = (x, y); the half-pixel center offset is
    baked into the projection formulas.
  - A Pose maps camera-frame points into the world frame.

All operations are pure and all types immutable, so everything here is safe
to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

UNIT_NORM_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    """Return v scaled to unit Euclidean norm (over the last axis)."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DomainError("cannot normalize a zero vector")
    return v / n


# ---------------------------------------------------------------------------
# Quaternions, stored as (w, x, y, z)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by unit quaternion q (..., 4).

    Shapes broadcast: one quaternion for many vectors, or one
    quaternion per vector.
    """
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Unit quaternion for a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    # canonical sign: non-negative scalar part
    return -q if q[0] < 0 else q


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = normalize(np.asarray(axis, dtype=np.float64))
    h = 0.5 * angle
    return np.concatenate([[math.cos(h)], math.sin(h) * axis])


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping camera-frame points to world-frame points.

    Attributes:
        q: unit quaternion (w, x, y, z).
        t: translation in meters (the camera origin in world coordinates).
    """

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(4)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise DomainError(f"pose quaternion norm {np.linalg.norm(q)} is not 1")
        q = q / np.linalg.norm(q)
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_matrix(rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        return Pose(quat_from_matrix(rotation), np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(quat_from_axis_angle(np.asarray(axis, float), angle), np.asarray(translation, float))

    @property
    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return quat_to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform camera-frame points (..., 3) into the world frame."""
        return quat_rotate(self.q, points) + self.t

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate camera-frame vectors (..., 3) into the world frame."""
        return quat_rotate(self.q, vectors)

    def compose(self, other: "Pose") -> "Pose":
        """Return self applied after other: (self . other)(p) = self(other(p))."""
        return Pose(quat_multiply(self.q, other.q), quat_rotate(self.q, other.t) + self.t)

    def inverse(self) -> "Pose":
        qc = quat_conjugate(self.q)
        return Pose(qc, -quat_rotate(qc, self.t))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def inverse(p: Pose) -> Pose:
    return p.inverse()


@dataclass(frozen=True)
class Ray:
    """World-frame ray with unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise DomainError("ray direction is not unit-norm")
        o.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


def transform_ray(pose: Pose, ray: Ray) -> Ray:
    """Map a camera-frame ray into the world frame."""
    return Ray(pose.apply(ray.origin), pose.rotate(ray.direction))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box in world coordinates (meters)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not np.all(lo < hi):
            raise DomainError(f"degenerate box: lo {lo} not strictly below hi {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.size))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Inclusive containment test for points (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def expanded(self, margin: float) -> "Aabb":
        return Aabb(self.lo - margin, self.hi + margin)

    def ray_exit(self, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Distance to the box boundary along each ray, for origins inside.

        Rays already outside the box return 0.  Never negative.
        """
        o = np.asarray(origins, dtype=np.float64)
        d = np.asarray(directions, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (self.lo - o) / d
            t_hi = (self.hi - o) / d
        far = np.where(np.isnan(t_lo) | np.isnan(t_hi), np.inf, np.maximum(t_lo, t_hi))
        return np.maximum(np.min(far, axis=-1), 0.0)

    def ray_range(self, origins: np.ndarray, directions: np.ndarray):
        """Parameter interval [t_enter, t_exit] where each ray overlaps the
        box, clamped to t >= 0.

        Returns:
            (t_enter, t_exit) arrays; a ray missing the box has
            t_enter > t_exit.
        """
        o = np.asarray(origins, dtype=np.float64)
        d = np.asarray(directions, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (self.lo - o) / d
            t_hi = (self.hi - o) / d
        bad = np.isnan(t_lo) | np.isnan(t_hi)
        near = np.where(bad, -np.inf, np.minimum(t_lo, t_hi))
        far = np.where(bad, np.inf, np.maximum(t_lo, t_hi))
        t_enter = np.maximum(near.max(axis=-1), 0.0)
        t_exit = far.min(axis=-1)
        return t_enter, t_exit


def look_at(position: np.ndarray, target: np.ndarray, up=(0.0, 1.0, 0.0)) -> Pose:
    """Pose at position whose +z axis points at target.

    The camera frame is built as columns [right, up', forward] with
    right = normalize(up x forward) and up' = forward x right, so the
    horizon stays level.

    Raises:
        DomainError: target coincides with position or the view direction
            is parallel to up.
    """
    position = np.asarray(position, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - position
    nf = np.linalg.norm(f)
    if nf == 0:
        raise DomainError("look_at target equals position")
    f = f / nf
    upv = np.asarray(up, dtype=np.float64)
    r = np.cross(upv, f)
    nr = np.linalg.norm(r)
    if nr < 1e-12:
        raise DomainError("look_at direction is parallel to up")
    r = r / nr
    u = np.cross(f, r)
    return Pose.from_matrix(np.stack([r, u, f], axis=1), position)


@dataclass(frozen=True)
class EquirectCamera:
    """Equirectangular panorama camera: columns map linearly to longitude,
    rows to latitude."""

    width: int
    height: int

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise DomainError(f"equirect width {self.width} must be 2x height {self.height}")
        if self.width < 8:
            raise DomainError("equirect width must be >= 8")

    def pixel_to_direction(self, u, v) -> np.ndarray:
        """Viewing direction for continuous pixel coordinates.

        theta = ((u + 0.5) / width) * 2pi - pi and
        phi = pi/2 - ((v + 0.5) / height) * pi, so integer (u, v) address
        pixel centers.  Returns unit directions with shape (..., 3).

        Raises:
            DomainError: any coordinate outside [0, width) x [0, height).
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if np.any(u < 0) or np.any(u >= self.width) or np.any(v < 0) or np.any(v >= self.height):
            raise DomainError("pixel coordinates out of image bounds")
        theta = ((u + 0.5) / self.width) * (2.0 * np.pi) - np.pi
        phi = np.pi / 2.0 - ((v + 0.5) / self.height) * np.pi
        cp = np.cos(phi)
        return np.stack([cp * np.sin(theta), np.sin(phi), cp * np.cos(theta)], axis=-1)

    def direction_to_pixel(self, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inverse of pixel_to_direction.

        Longitude is wrapped to [-pi, pi), so u lies in [-0.5, width - 0.5).
        The poles clamp to v = -0.5 and v = height - 0.5 rather than raising:
        renderers legitimately sample arbitrary directions.
        """
        d = np.asarray(d, dtype=np.float64)
        theta = np.arctan2(d[..., 0], d[..., 2])
        theta = np.where(theta >= np.pi, theta - 2.0 * np.pi, theta)
        norm = np.linalg.norm(d, axis=-1)
        phi = np.arcsin(np.clip(d[..., 1] / np.where(norm == 0, 1.0, norm), -1.0, 1.0))
        u = (theta + np.pi) / (2.0 * np.pi) * self.width - 0.5
        v = (np.pi / 2.0 - phi) / np.pi * self.height - 0.5
        v = np.clip(v, -0.5, self.height - 0.5)
        return u, v

    def direction_grid(self) -> np.ndarray:
        """Unit directions for every pixel center, shape (height, width, 3)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return self.pixel_to_direction(u, v)


@dataclass(frozen=True)
class FisheyeCamera:
    """Equidistant (angle-proportional radius) fisheye camera.

    The focal scale is f = (min(width, height) / 2) / (fov / 2) pixels per
    radian, so the lens circle of an ultra-wide lens just fits the short
    image side.
    """

    width: int
    height: int
    fov: float
    center: tuple[float, float] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (0.0 < self.fov < 2.0 * np.pi):
            raise DomainError(f"fisheye fov {self.fov} outside (0, 2pi)")
        c = self.center if self.center is not None else ((self.width - 1) / 2.0, (self.height - 1) / 2.0)
        cx, cy = float(c[0]), float(c[1])
        if not (0 <= cx < self.width and 0 <= cy < self.height):
            raise DomainError("fisheye center outside image bounds")
        object.__setattr__(self, "center", (cx, cy))

    @property
    def focal(self) -> float:
        return (min(self.width, self.height) / 2.0) / (self.fov / 2.0)

    def unproject(self, u, v) -> tuple[np.ndarray, np.ndarray]:
        """Directions for pixel coordinates, plus a validity mask.

        A pixel is invalid when its polar angle r / f exceeds fov / 2.
        Invalid entries hold the forward direction as a placeholder.
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        dx = u - self.center[0]
        dy = v - self.center[1]
        r = np.hypot(dx, dy)
        psi = r / self.focal
        valid = psi <= self.fov / 2.0
        with np.errstate(invalid="ignore", divide="ignore"):
            ax = np.where(r > 0, dx / r, 0.0)
            ay = np.where(r > 0, -dy / r, 0.0)
        sp = np.sin(psi)
        d = np.stack([sp * ax, sp * ay, np.cos(psi)], axis=-1)
        return d, valid

    def project(self, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pixel coordinates (u, v) for directions, plus a validity mask
        (false where the polar angle exceeds fov / 2)."""
        d = np.asarray(d, dtype=np.float64)
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        s = np.hypot(x, y)
        psi = np.arctan2(s, z)
        valid = psi <= self.fov / 2.0
        r = self.focal * psi
        with np.errstate(invalid="ignore", divide="ignore"):
            ax = np.where(s > 0, x / s, 0.0)
            ay = np.where(s > 0, y / s, 0.0)
        u = self.center[0] + r * ax
        v = self.center[1] - r * ay
        return u, v, valid
