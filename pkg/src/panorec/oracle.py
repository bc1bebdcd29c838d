"""Analytic ray-traced scenes for ground-truth panoramas, depth, and poses.

Scenes are built from axis-aligned boxes and spheres with procedural albedo
(solid color or a 3D checkerboard).  Rendering intersects every camera ray
against every primitive in closed form, so images and depth maps are exact
to floating-point precision and bit-for-bit reproducible.  This gives the
reconstruction code an independent oracle: anything the neural field or the
stereo matcher claims can be checked against these renders.

Lighting is deliberately simple: a fixed ambient term plus one directional
light, no shadows, no interreflection.  Both reconstruction paths assume
roughly view-independent appearance, and anything fancier would make the
analytic depth checks harder for no benefit.

Surface normals are oriented toward the viewer before shading, so the
inside of a room box is lit the same way a solid box seen from outside is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import Aabb, EquirectCamera, FisheyeCamera, Pose, look_at, normalize

# Single directional light for the whole package; arbitrary but fixed so
# renders are reproducible across versions.
LIGHT_DIR = normalize(np.array([0.3, 0.8, 0.5]))
AMBIENT = 0.3
DIFFUSE = 0.7

_EPS = 1e-9


# ---------------------------------------------------------------------------
# Procedural albedo


@dataclass(frozen=True)
class SolidAlbedo:
    """Constant RGB albedo."""

    color: tuple[float, float, float]

    def at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.broadcast_to(np.asarray(self.color, dtype=np.float64), points.shape).copy()


@dataclass(frozen=True)
class CheckerAlbedo:
    """3D checkerboard: world space is tiled into cubes of side `period`,
    colored by coordinate parity."""

    color_a: tuple[float, float, float]
    color_b: tuple[float, float, float]
    period: float = 0.25

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError(f"checkerboard period {self.period} must be > 0")

    def at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        cells = np.floor(points / self.period).astype(np.int64)
        parity = (cells.sum(axis=-1) % 2).astype(bool)
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        return np.where(parity[..., None], b, a)


# ---------------------------------------------------------------------------
# Primitives


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    albedo: object = field(default_factory=lambda: SolidAlbedo((0.7, 0.7, 0.7)))

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"sphere radius {self.radius} must be > 0")

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Smallest ray parameter t > 0 per direction; +inf on miss."""
        c = np.asarray(self.center, dtype=np.float64)
        oc = np.asarray(origin, dtype=np.float64) - c
        b = directions @ oc
        disc = b * b - (oc @ oc - self.radius * self.radius)
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t1 = -b - sq
        t2 = -b + sq
        t = np.where(t1 > _EPS, t1, np.where(t2 > _EPS, t2, np.inf))
        return np.where(ok, t, np.inf)

    def normal(self, points: np.ndarray) -> np.ndarray:
        return (points - np.asarray(self.center, dtype=np.float64)) / self.radius

    def occupies(self, points: np.ndarray) -> np.ndarray:
        """True where a camera must not stand (inside or on the surface)."""
        d = np.asarray(points, dtype=np.float64) - np.asarray(self.center, dtype=np.float64)
        return np.einsum("...i,...i->...", d, d) <= self.radius * self.radius

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from points to the sphere surface."""
        d = np.linalg.norm(points - np.asarray(self.center, dtype=np.float64), axis=-1)
        return np.abs(d - self.radius)

    def extent(self) -> Aabb:
        c = np.asarray(self.center, dtype=np.float64)
        return Aabb(c - self.radius, c + self.radius)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box primitive.

    mode "solid" is an obstacle: cameras may not stand inside it.  mode
    "room" is an enclosure meant to be seen from within: cameras may ONLY
    stand inside it, and its walls render from both sides.
    """

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: object = field(default_factory=lambda: SolidAlbedo((0.7, 0.7, 0.7)))
    mode: str = "solid"

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if not np.all(lo < hi):
            raise DomainError(f"degenerate box: {self.lo} .. {self.hi}")
        if self.mode not in ("solid", "room"):
            raise DomainError(f"unknown box mode {self.mode!r}")

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """First boundary crossing with t > 0 (slab method); +inf on miss.

        From inside the box this is the exit point, which is exactly what a
        room needs; from outside it is the entry point.
        """
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        o = np.asarray(origin, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_a = (lo - o) / directions
            t_b = (hi - o) / directions
        near = np.minimum(t_a, t_b)
        far = np.maximum(t_a, t_b)
        # axis with zero direction component and origin inside its slab
        # contributes (-inf, +inf); on-boundary cases produce nan, treated
        # the same way
        near = np.where(np.isnan(near), -np.inf, near)
        far = np.where(np.isnan(far), np.inf, far)
        t_near = near.max(axis=-1)
        t_far = far.min(axis=-1)
        hit = (t_near <= t_far) & (t_far > _EPS)
        t = np.where(t_near > _EPS, t_near, t_far)
        return np.where(hit, t, np.inf)

    def normal(self, points: np.ndarray) -> np.ndarray:
        """Outward face normal of the closest face."""
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        rel = (points - center) / half
        axis = np.argmax(np.abs(rel), axis=-1)
        n = np.zeros_like(points)
        idx = np.arange(n.shape[0]) if n.ndim == 2 else None
        if n.ndim == 1:
            n[axis] = np.sign(rel[axis])
        else:
            n[idx, axis] = np.sign(rel[idx, axis])
        return n

    def occupies(self, points: np.ndarray) -> np.ndarray:
        """True where a camera must not stand.

        Solid boxes forbid their closed interior; rooms forbid everything
        that is NOT their open interior.
        """
        p = np.asarray(points, dtype=np.float64)
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        strictly_inside = np.all((p > lo) & (p < hi), axis=-1)
        if self.mode == "room":
            return ~strictly_inside
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from points to the box boundary."""
        p = np.asarray(points, dtype=np.float64)
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        outside = np.maximum(np.maximum(lo - p, 0.0), np.maximum(p - hi, 0.0))
        d_out = np.linalg.norm(outside, axis=-1)
        d_in = np.min(np.minimum(p - lo, hi - p), axis=-1)
        return np.where(d_out > 0, d_out, np.abs(d_in))

    def extent(self) -> Aabb:
        return Aabb(np.asarray(self.lo, float), np.asarray(self.hi, float))


# ---------------------------------------------------------------------------
# Scene


@dataclass(frozen=True)
class Scene:
    """Primitives plus world bounds and a background color.

    Invariants, checked at construction: every primitive's extent lies
    inside bounds.
    """

    primitives: tuple
    bounds: Aabb
    background: tuple[float, float, float] = (0.05, 0.05, 0.08)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for i, prim in enumerate(self.primitives):
            ext = prim.extent()
            if not (np.all(ext.lo >= self.bounds.lo) and np.all(ext.hi <= self.bounds.hi)):
                raise DomainError(f"primitive {i} extends outside scene bounds")

    def occupied(self, points: np.ndarray) -> np.ndarray:
        """True where any primitive forbids a camera."""
        p = np.asarray(points, dtype=np.float64)
        out = np.zeros(p.shape[:-1], dtype=bool)
        for prim in self.primitives:
            out |= prim.occupies(p)
        return out

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the nearest primitive surface (+inf if no primitives)."""
        p = np.asarray(points, dtype=np.float64)
        best = np.full(p.shape[:-1], np.inf)
        for prim in self.primitives:
            best = np.minimum(best, prim.surface_distance(p))
        return best


@dataclass(frozen=True)
class GroundTruthRender:
    """Exact render: float RGB in [0, 1], metric depth (+inf background)."""

    image: np.ndarray
    depth: np.ndarray
    pose: Pose


def trace(scene: Scene, origin: np.ndarray, directions: np.ndarray):
    """Shade a bundle of world-frame rays from one origin.

    Args:
        scene: what to render.
        origin: (3,) ray origin.
        directions: (N, 3) unit directions.

    Returns:
        (colors (N, 3) in [0, 1], depth (N,) with +inf for misses).
    """
    directions = np.asarray(directions, dtype=np.float64)
    n_rays = directions.shape[0]
    t_best = np.full(n_rays, np.inf)
    which = np.full(n_rays, -1, dtype=np.int64)
    for i, prim in enumerate(scene.primitives):
        t = prim.intersect(origin, directions)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        which = np.where(closer, i, which)

    colors = np.broadcast_to(np.asarray(scene.background, dtype=np.float64), (n_rays, 3)).copy()
    for i, prim in enumerate(scene.primitives):
        mask = which == i
        if not mask.any():
            continue
        p = origin + t_best[mask, None] * directions[mask]
        n = prim.normal(p)
        # orient toward the viewer so room interiors shade like exteriors
        facing_away = np.einsum("ij,ij->i", n, directions[mask]) > 0
        n = np.where(facing_away[:, None], -n, n)
        lambert = np.maximum(n @ LIGHT_DIR, 0.0)
        colors[mask] = prim.albedo.at(p) * (AMBIENT + DIFFUSE * lambert)[:, None]
    return np.clip(colors, 0.0, 1.0), t_best


def render_panorama(scene: Scene, pose: Pose, cam: EquirectCamera) -> GroundTruthRender:
    """Render an equirectangular view with exact per-pixel depth.

    Raises:
        DomainError: the camera stands inside (or on) a primitive.
    """
    if bool(scene.occupied(pose.t)):
        raise DomainError("camera position is inside a primitive")
    dirs = pose.rotate(cam.direction_grid().reshape(-1, 3))
    colors, depth = trace(scene, pose.t, dirs)
    return GroundTruthRender(
        image=colors.reshape(cam.height, cam.width, 3),
        depth=depth.reshape(cam.height, cam.width),
        pose=pose,
    )


def render_fisheye(scene: Scene, pose: Pose, cam: FisheyeCamera):
    """Render a fisheye view.

    Returns:
        (image (H, W, 3), depth (H, W), valid (H, W)); pixels outside the
        lens circle are black with depth 0 and valid False.
    """
    if bool(scene.occupied(pose.t)):
        raise DomainError("camera position is inside a primitive")
    v, u = np.mgrid[0 : cam.height, 0 : cam.width]
    d_cam, valid = cam.unproject(u.astype(np.float64), v.astype(np.float64))
    dirs = pose.rotate(d_cam.reshape(-1, 3))
    colors, depth = trace(scene, pose.t, dirs)
    image = colors.reshape(cam.height, cam.width, 3)
    depth = depth.reshape(cam.height, cam.width)
    image[~valid] = 0.0
    depth[~valid] = 0.0
    return image, depth, valid


# ---------------------------------------------------------------------------
# Trajectories


def make_trajectory(
    scene: Scene,
    n: int,
    kind: str,
    radius: float | None = None,
    height: float = 0.0,
    rows: int | None = None,
    margin: float = 0.5,
) -> list[Pose]:
    """Camera poses along a survey pattern, all collision-checked.

    kind "orbit": n poses on a horizontal circle of the given radius around
    the bounds center, offset vertically by height, each looking at the
    circle center.  kind "lawnmower": a serpentine sweep over the horizontal
    bounds extent inset by margin, at the given height, each pose looking
    along its direction of travel.

    Raises:
        DomainError: n < 1, unknown kind, or any generated pose collides
            with a primitive or leaves the bounds.
    """
    if n < 1:
        raise DomainError(f"trajectory needs n >= 1, got {n}")
    c = scene.bounds.center
    if kind == "orbit":
        if radius is None:
            radius = 0.4 * float(min(scene.bounds.size[0], scene.bounds.size[2])) / 2.0
        target = c + np.array([0.0, height, 0.0])
        poses = []
        for i in range(n):
            a = 2.0 * np.pi * i / n
            p = c + np.array([radius * np.sin(a), height, radius * np.cos(a)])
            poses.append(look_at(p, target))
    elif kind == "lawnmower":
        if rows is None:
            rows = max(1, int(np.round(np.sqrt(n))))
        cols = int(np.ceil(n / rows))
        lo = scene.bounds.lo + margin
        hi = scene.bounds.hi - margin
        if not np.all(lo < hi):
            raise DomainError("margin leaves no room inside bounds")
        xs = np.linspace(lo[0], hi[0], cols) if cols > 1 else np.array([c[0]])
        zs = np.linspace(lo[2], hi[2], rows) if rows > 1 else np.array([c[2]])
        y = c[1] + height
        poses = []
        for r in range(rows):
            order = xs if r % 2 == 0 else xs[::-1]
            heading = np.array([1.0, 0.0, 0.0]) if r % 2 == 0 else np.array([-1.0, 0.0, 0.0])
            if cols == 1:
                heading = np.array([0.0, 0.0, 1.0])
            for x in order:
                if len(poses) == n:
                    break
                p = np.array([x, y, zs[r]])
                poses.append(look_at(p, p + heading))
    else:
        raise DomainError(f"unknown trajectory kind {kind!r}")

    origins = np.array([p.t for p in poses])
    bad = ~scene.bounds.contains(origins) | scene.occupied(origins)
    if bad.any():
        raise DomainError(
            f"{int(bad.sum())} trajectory poses collide with primitives or leave bounds"
        )
    return poses


# ---------------------------------------------------------------------------
# Canned scenes


def demo_room_scene(textured: bool = True) -> Scene:
    """The standard benchmark interior: a 4 x 3 x 5 m room holding one box
    and one sphere.

    With textured=True every surface carries a checkerboard so stereo
    matching has contrast to lock onto; textured=False paints everything in
    flat colors, which deliberately starves patch matching of signal.
    """
    if textured:
        walls = CheckerAlbedo((0.9, 0.85, 0.8), (0.35, 0.4, 0.45), period=0.25)
        crate = CheckerAlbedo((0.85, 0.3, 0.25), (0.95, 0.9, 0.85), period=0.2)
        ball = CheckerAlbedo((0.2, 0.6, 0.3), (0.9, 0.9, 0.6), period=0.15)
    else:
        walls = SolidAlbedo((0.62, 0.62, 0.6))
        crate = SolidAlbedo((0.7, 0.45, 0.35))
        ball = SolidAlbedo((0.35, 0.55, 0.4))
    room = Box((-2.0, -1.5, -2.5), (2.0, 1.5, 2.5), albedo=walls, mode="room")
    box = Box((-1.5, -1.5, -2.0), (-0.7, -0.3, -1.2), albedo=crate)
    sphere = Sphere((1.0, -0.9, 1.0), 0.6, albedo=ball)
    bounds = Aabb((-2.1, -1.6, -2.6), (2.1, 1.6, 2.6))
    return Scene(primitives=(room, box, sphere), bounds=bounds)


# ---------------------------------------------------------------------------
# Scene files (JSON)


def _albedo_to_json(albedo) -> dict:
    if isinstance(albedo, SolidAlbedo):
        return {"kind": "solid", "color": list(albedo.color)}
    if isinstance(albedo, CheckerAlbedo):
        return {
            "kind": "checker",
            "color_a": list(albedo.color_a),
            "color_b": list(albedo.color_b),
            "period": albedo.period,
        }
    raise ConfigError(f"unserializable albedo {type(albedo).__name__}")


def _albedo_from_json(obj) -> object:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("albedo must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "solid":
        _expect_keys(obj, {"kind", "color"}, "albedo")
        return SolidAlbedo(tuple(_vec3(obj["color"], "albedo color")))
    if kind == "checker":
        _expect_keys(obj, {"kind", "color_a", "color_b", "period"}, "albedo")
        return CheckerAlbedo(
            tuple(_vec3(obj["color_a"], "albedo color_a")),
            tuple(_vec3(obj["color_b"], "albedo color_b")),
            float(obj["period"]),
        )
    raise ConfigError(f"unknown albedo kind {kind!r}")


def _vec3(v, what: str) -> list:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ConfigError(f"{what} must be a 3-element array")
    return [float(x) for x in v]


def _expect_keys(obj: dict, allowed: set, what: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"unknown {what} keys: {sorted(extra)}")


def scene_to_json(scene: Scene) -> dict:
    prims = []
    for p in scene.primitives:
        if isinstance(p, Sphere):
            prims.append(
                {
                    "type": "sphere",
                    "center": list(np.asarray(p.center, float)),
                    "radius": float(p.radius),
                    "albedo": _albedo_to_json(p.albedo),
                }
            )
        elif isinstance(p, Box):
            prims.append(
                {
                    "type": "box",
                    "lo": list(np.asarray(p.lo, float)),
                    "hi": list(np.asarray(p.hi, float)),
                    "mode": p.mode,
                    "albedo": _albedo_to_json(p.albedo),
                }
            )
        else:
            raise ConfigError(f"unserializable primitive {type(p).__name__}")
    return {
        "background": list(np.asarray(scene.background, float)),
        "bounds": {"lo": list(scene.bounds.lo), "hi": list(scene.bounds.hi)},
        "primitives": prims,
    }


def scene_from_json(obj) -> Scene:
    """Parse a scene document; unknown keys and types are rejected.

    Raises:
        ConfigError: structurally invalid document.
        DomainError: structurally fine but geometrically impossible.
    """
    if not isinstance(obj, dict):
        raise ConfigError("scene document must be a JSON object")
    _expect_keys(obj, {"background", "bounds", "primitives"}, "scene")
    for key in ("bounds", "primitives"):
        if key not in obj:
            raise ConfigError(f"scene document missing {key!r}")
    b = obj["bounds"]
    if not isinstance(b, dict):
        raise ConfigError("bounds must be an object")
    _expect_keys(b, {"lo", "hi"}, "bounds")
    bounds = Aabb(_vec3(b.get("lo"), "bounds lo"), _vec3(b.get("hi"), "bounds hi"))
    background = tuple(_vec3(obj.get("background", [0.05, 0.05, 0.08]), "background"))
    prims = []
    if not isinstance(obj["primitives"], list):
        raise ConfigError("primitives must be an array")
    for i, p in enumerate(obj["primitives"]):
        if not isinstance(p, dict) or "type" not in p:
            raise ConfigError(f"primitive {i} must be an object with a 'type'")
        kind = p["type"]
        if kind == "sphere":
            _expect_keys(p, {"type", "center", "radius", "albedo"}, f"primitive {i}")
            prims.append(
                Sphere(
                    tuple(_vec3(p.get("center"), f"primitive {i} center")),
                    float(p.get("radius", 0.0)),
                    albedo=_albedo_from_json(p.get("albedo", {"kind": "solid", "color": [0.7, 0.7, 0.7]})),
                )
            )
        elif kind == "box":
            _expect_keys(p, {"type", "lo", "hi", "mode", "albedo"}, f"primitive {i}")
            prims.append(
                Box(
                    tuple(_vec3(p.get("lo"), f"primitive {i} lo")),
                    tuple(_vec3(p.get("hi"), f"primitive {i} hi")),
                    albedo=_albedo_from_json(p.get("albedo", {"kind": "solid", "color": [0.7, 0.7, 0.7]})),
                    mode=p.get("mode", "solid"),
                )
            )
        else:
            raise ConfigError(f"unknown primitive type {kind!r}")
    return Scene(primitives=tuple(prims), bounds=bounds, background=background)


def load_scene(path) -> Scene:
    """Read a scene JSON file.

    Raises:
        ConfigError: unreadable or invalid document.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scene file {path}: {e}") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"scene file {path} is not valid JSON: {e}") from e
    return scene_from_json(obj)


def save_scene(path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(scene_to_json(scene), indent=2) + "\n")
