"""Image buffers: sampling, color conversion, and PNG input/output.

Images are numpy arrays indexed [row, column] with row 0 at the top.  Color
images are (H, W, 3) uint8 or float; depth maps are (H, W) float meters.

Panorama-aware sampling wraps horizontally (the left and right edges are
the same meridian) and clamps vertically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DomainError

# BT.601 luma weights, the broadcast-video standard ones.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def to_gray(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W, 3) image to (H, W) float64 luma.

    uint8 input stays in the 0..255 range; float input keeps its range.
    """
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DomainError(f"expected (H, W, 3) image, got shape {image.shape}")
    return image.astype(np.float64) @ LUMA_WEIGHTS


def sample_bilinear_wrap(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinearly sample at continuous (u, v), wrapping u and clamping v.

    Args:
        image: (H, W) or (H, W, C) array, any numeric dtype.
        u: column coordinates, arbitrary shape (integer values hit pixel
            centers).
        v: row coordinates, same shape as u.

    Returns:
        float64 samples with shape u.shape (+ (C,) for color input).
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1.0)
    uf = np.floor(u)
    v0 = np.floor(v).astype(np.int64)
    fu = u - uf
    fv = v - v0
    # wrap on the integer index: float modulo of a tiny negative can land
    # exactly on w
    u0 = uf.astype(np.int64) % w
    u1 = (u0 + 1) % w
    v1 = np.minimum(v0 + 1, h - 1)
    if image.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    img = image.astype(np.float64)
    top = img[v0, u0] * (1 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1 - fu) + img[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def sample_bilinear_clamp(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinearly sample at continuous (u, v), clamping both axes.

    For non-periodic images (fisheye frames, depth maps).  Same shapes and
    dtypes as sample_bilinear_wrap.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, w - 1.0)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    fu = u - u0
    fv = v - v0
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    if image.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    img = image.astype(np.float64)
    top = img[v0, u0] * (1 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1 - fu) + img[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Round-and-clip a float image in [0, 1] to uint8."""
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 3) uint8 image as PNG."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise DomainError(f"write_png wants uint8, got {image.dtype}")
    Image.fromarray(image).save(str(path), format="PNG")


def read_png(path) -> np.ndarray:
    """Read a PNG as uint8, (H, W, 3) for color or (H, W) for grayscale."""
    with Image.open(str(path)) as im:
        if im.mode in ("RGB", "L"):
            return np.asarray(im)
        if im.mode in ("RGBA", "LA", "P"):
            return np.asarray(im.convert("RGB"))
        if im.mode.startswith("I"):
            return np.asarray(im)
        raise DomainError(f"unsupported PNG mode {im.mode}")


# ---------------------------------------------------------------------------
# Depth maps: 16-bit grayscale PNG in millimeters, 0 = no measurement.
# A JSON sidecar carries the frame id and the depth range actually present.


def write_depth_png(path, depth_m: np.ndarray, frame_id: str) -> None:
    """Store a metric depth map as PNG16 millimeters plus a JSON sidecar.

    Invalid pixels are any that are non-finite, non-positive, or beyond
    the 65.535 m encodable range; they are written as 0.

    Args:
        path: output .png path; the sidecar lands next to it as .json.
        depth_m: (H, W) float depth in meters.
        frame_id: identifier recorded in the sidecar.
    """
    path = Path(path)
    depth_m = np.asarray(depth_m, dtype=np.float64)
    if depth_m.ndim != 2:
        raise DomainError("depth map must be 2-D")
    valid = np.isfinite(depth_m) & (depth_m > 0) & (depth_m <= 65.535)
    mm = np.zeros(depth_m.shape, dtype=np.uint16)
    mm[valid] = np.clip(np.rint(depth_m[valid] * 1000.0), 1, 65535).astype(np.uint16)
    Image.fromarray(mm).save(str(path), format="PNG")
    if valid.any():
        d_min = float(depth_m[valid].min())
        d_max = float(depth_m[valid].max())
    else:
        d_min = d_max = 0.0
    sidecar = {"frame_id": frame_id, "d_min": d_min, "d_max": d_max}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_depth_png(path) -> tuple[np.ndarray, dict]:
    """Load a PNG16 depth map back to meters (0 stays 0 = invalid).

    Returns:
        (depth_m, sidecar_dict); the sidecar is {} when no .json exists.
    """
    path = Path(path)
    with Image.open(str(path)) as im:
        mm = np.asarray(im)
    if mm.dtype not in (np.uint16, np.int32):
        raise DomainError(f"expected 16-bit depth PNG, got dtype {mm.dtype}")
    depth = mm.astype(np.float64) / 1000.0
    sidecar_path = path.with_suffix(".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    return depth, sidecar
