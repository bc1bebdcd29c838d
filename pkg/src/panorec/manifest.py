"""Dataset manifests: the posed-panorama contract between pipeline stages.

A manifest is a JSON document listing the panorama camera, scene bounds,
and one record per frame {path, quat (w x y z), t (x y z), mask, sharpness}.
Image paths are relative to the manifest's directory.  Parsing is strict:
unknown keys and unknown mask kinds are rejected, because a silently
ignored field usually means a writer/reader version mismatch.

Poses come from upstream (the synthetic generator here, a tracker or SfM
tool in the field); this package never estimates them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .geometry import Aabb, EquirectCamera, Pose
from .images import read_png

MASK_KINDS = ("none", "bottom_third")


@dataclass(frozen=True)
class FrameRecord:
    """One manifest row; the image stays on disk until loaded."""

    path: str
    pose: Pose
    mask: str
    sharpness: float

    def __post_init__(self):
        if self.mask not in MASK_KINDS:
            raise DomainError(f"unknown mask kind {self.mask!r}, know {MASK_KINDS}")
        if not np.isfinite(self.sharpness) or self.sharpness < 0:
            raise DomainError(f"sharpness {self.sharpness} must be finite and >= 0")
        if not (np.all(np.isfinite(self.pose.q)) and np.all(np.isfinite(self.pose.t))):
            raise DomainError("pose must be finite")


@dataclass(frozen=True)
class DatasetManifest:
    camera: EquirectCamera
    bounds: Aabb
    frames: tuple

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class PanoramaFrame:
    """A fully loaded frame: pixels, validity mask, pose, quality score."""

    image: np.ndarray
    pose: Pose
    mask: np.ndarray
    sharpness: float
    timestamp_index: int

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise DomainError("frame image must be (H, W, 3) uint8")
        if img.shape[1] != 2 * img.shape[0]:
            raise DomainError(
                f"frame width {img.shape[1]} must be twice height {img.shape[0]}"
            )
        m = np.asarray(self.mask)
        if m.shape != img.shape[:2] or m.dtype != np.bool_:
            raise DomainError("mask must be boolean with the image's (H, W)")
        if not np.isfinite(self.sharpness) or self.sharpness < 0:
            raise DomainError(f"sharpness {self.sharpness} must be finite and >= 0")


def _require_keys(obj: dict, allowed: set, what: str) -> None:
    if not isinstance(obj, dict):
        raise DomainError(f"{what} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise DomainError(f"unknown {what} keys: {sorted(extra)}")


def _floats(v, n: int, what: str) -> np.ndarray:
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise DomainError(f"{what} must be a {n}-element array")
    try:
        return np.array([float(x) for x in v], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DomainError(f"{what} has a non-numeric entry: {e}") from None


def manifest_to_json(manifest: DatasetManifest) -> dict:
    return {
        "camera": {"width": manifest.camera.width, "height": manifest.camera.height},
        "bounds": {"lo": list(manifest.bounds.lo), "hi": list(manifest.bounds.hi)},
        "frames": [
            {
                "path": fr.path,
                "quat": [float(x) for x in fr.pose.q],
                "t": [float(x) for x in fr.pose.t],
                "mask": fr.mask,
                "sharpness": float(fr.sharpness),
            }
            for fr in manifest.frames
        ],
    }


def manifest_from_json(obj) -> DatasetManifest:
    """Parse a manifest document.

    Raises:
        DomainError: structural problems, unknown keys, unknown mask kinds,
            non-finite poses.
    """
    _require_keys(obj, {"camera", "bounds", "frames"}, "manifest")
    for key in ("camera", "bounds", "frames"):
        if key not in obj:
            raise DomainError(f"manifest missing {key!r}")
    cam_obj = obj["camera"]
    _require_keys(cam_obj, {"width", "height"}, "camera")
    try:
        camera = EquirectCamera(int(cam_obj["width"]), int(cam_obj["height"]))
    except (KeyError, TypeError, ValueError) as e:
        raise DomainError(f"bad camera block: {e}") from None
    b = obj["bounds"]
    _require_keys(b, {"lo", "hi"}, "bounds")
    bounds = Aabb(_floats(b.get("lo"), 3, "bounds lo"), _floats(b.get("hi"), 3, "bounds hi"))
    if not isinstance(obj["frames"], list):
        raise DomainError("frames must be an array")
    frames = []
    for i, fr in enumerate(obj["frames"]):
        _require_keys(fr, {"path", "quat", "t", "mask", "sharpness"}, f"frame {i}")
        for key in ("path", "quat", "t", "mask", "sharpness"):
            if key not in fr:
                raise DomainError(f"frame {i} missing {key!r}")
        if not isinstance(fr["path"], str) or not fr["path"]:
            raise DomainError(f"frame {i} path must be a non-empty string")
        q = _floats(fr["quat"], 4, f"frame {i} quat")
        t = _floats(fr["t"], 3, f"frame {i} t")
        frames.append(
            FrameRecord(
                path=fr["path"],
                pose=Pose(q, t),
                mask=str(fr["mask"]),
                sharpness=float(fr["sharpness"]),
            )
        )
    return DatasetManifest(camera=camera, bounds=bounds, frames=tuple(frames))


def load_manifest(path) -> DatasetManifest:
    """Read a manifest JSON file.

    Raises:
        DomainError: invalid content (missing file propagates as OSError).
    """
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise DomainError(f"manifest {path} is not valid JSON: {e}") from None
    return manifest_from_json(obj)


def save_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text(json.dumps(manifest_to_json(manifest), indent=2) + "\n")


def load_frame(manifest: DatasetManifest, index: int, root) -> PanoramaFrame:
    """Load one frame's pixels and build its validity mask.

    Args:
        manifest: parsed manifest.
        index: frame position in the manifest.
        root: directory frame paths are relative to (usually the manifest's
            parent directory).
    """
    from .ingest import occlusion_mask  # local import to avoid a cycle

    rec = manifest.frames[index]
    img = read_png(Path(root) / rec.path)
    if img.ndim != 3:
        raise DomainError(f"frame {rec.path} is not a color image")
    if (img.shape[0], img.shape[1]) != (manifest.camera.height, manifest.camera.width):
        raise DomainError(
            f"frame {rec.path} is {img.shape[1]}x{img.shape[0]}, "
            f"manifest says {manifest.camera.width}x{manifest.camera.height}"
        )
    mask = occlusion_mask(manifest.camera, rec.mask)
    return PanoramaFrame(
        image=img,
        pose=rec.pose,
        mask=mask,
        sharpness=rec.sharpness,
        timestamp_index=index,
    )


def load_frames(manifest: DatasetManifest, root) -> list:
    return [load_frame(manifest, i, root) for i in range(len(manifest))]
