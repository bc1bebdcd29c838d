"""Raw capture to posed panorama dataset: stitching, scoring, selection.

The capture rig is a pair of back-to-back fisheye lenses sharing (nearly)
one nodal point.  stitch_dual_fisheye resamples both onto the
equirectangular grid and alpha-blends the overlap.  Frame quality is
scored by Laplacian variance and the steadiest frame near each time-bin
center is kept, mirroring how aerial survey footage gets decimated into
keyframes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .errors import DomainError
from .geometry import EquirectCamera, FisheyeCamera, Pose, quat_from_axis_angle
from .images import sample_bilinear_clamp, to_gray

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class RigCalibration:
    """Geometry of a dual-fisheye rig.

    back_rotation maps back-lens camera coordinates into front-lens camera
    coordinates; nominally a 180 degree turn about +y.  blend_width is the
    angular width (radians) of the linear cross-fade band inside each
    lens's field-of-view edge.
    """

    front: FisheyeCamera
    back: FisheyeCamera
    back_rotation: Pose = None  # type: ignore[assignment]
    blend_width: float = 0.087  # ~5 degrees

    def __post_init__(self):
        if self.back_rotation is None:
            object.__setattr__(
                self,
                "back_rotation",
                Pose(quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), np.pi), np.zeros(3)),
            )
        if not self.blend_width > 0:
            raise DomainError(f"blend_width {self.blend_width} must be > 0")
        if self.front.fov + self.back.fov < 2.0 * np.pi:
            raise DomainError(
                "combined fields of view do not cover the sphere "
                f"({self.front.fov:.3f} + {self.back.fov:.3f} < 2*pi)"
            )


def occlusion_mask(cam: EquirectCamera, kind: str) -> np.ndarray:
    """Static validity mask for a panorama camera.

    kind "none": everything valid.  kind "bottom_third": the bottom third
    of the rows (the ceil(height/3) rows nearest the nadir) are false,
    modeling a top-mounted camera that always sees its own vehicle below.
    """
    if kind == "none":
        return np.ones((cam.height, cam.width), dtype=bool)
    if kind == "bottom_third":
        mask = np.ones((cam.height, cam.width), dtype=bool)
        first_bad = cam.height - int(np.ceil(cam.height / 3))
        mask[first_bad:, :] = False
        return mask
    raise DomainError(f"unknown mask kind {kind!r}")


def sharpness_score(image: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Blur metric: variance of the 3x3 Laplacian response.

    The convolution wraps in both axes (panoramas are horizontally
    periodic, and wrap keeps the score exactly invariant under cyclic
    shifts, which makes the metric comparable across frames).

    Args:
        image: (H, W) or (H, W, 3); converted to luma first.
        mask: optional (H, W) boolean; the variance is taken over true
            pixels only.

    Raises:
        DomainError: image smaller than the 3x3 kernel, or an all-false
            mask.
    """
    gray = to_gray(image)
    if min(gray.shape) < 3:
        raise DomainError(f"image {gray.shape} too small for a 3x3 Laplacian")
    resp = convolve(gray, LAPLACIAN_3X3, mode="wrap")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gray.shape:
            raise DomainError("mask shape does not match image")
        resp = resp[mask]
        if resp.size == 0:
            raise DomainError("mask leaves no pixels to score")
    return float(np.var(resp))


def select_frames(frames, target_count: int, window: int = 0) -> list:
    """Pick target_count frames at even time intervals, dodging blur.

    The sequence is split into target_count equal bins.  In each bin the
    frame with the highest .sharpness within +-window of the bin center is
    chosen (the neighborhood is clipped to the bin, so picks never collide
    or reorder).  Ties go to the earlier frame.

    Args:
        frames: sequence of objects with a .sharpness attribute.
        target_count: number of frames wanted, >= 1.
        window: search half-width around each bin center.

    Returns:
        Selected frames in their original order.

    Raises:
        DomainError: target_count < 1 or more than the sequence length.
    """
    n = len(frames)
    if target_count < 1:
        raise DomainError(f"target_count {target_count} must be >= 1")
    if target_count > n:
        raise DomainError(f"target_count {target_count} exceeds {n} frames")
    if window < 0:
        raise DomainError(f"window {window} must be >= 0")
    picked = []
    for i in range(target_count):
        bin_start = (i * n) // target_count
        bin_end = ((i + 1) * n) // target_count
        center = ((2 * i + 1) * n) // (2 * target_count)
        lo = max(bin_start, center - window)
        hi = min(bin_end, center + window + 1)
        best = max(range(lo, hi), key=lambda j: (frames[j].sharpness, -j))
        picked.append(best)
    return [frames[j] for j in picked]


def stitch_dual_fisheye(
    front_image: np.ndarray,
    back_image: np.ndarray,
    rig: RigCalibration,
    out: EquirectCamera,
) -> tuple[np.ndarray, np.ndarray]:
    """Resample a dual-fisheye pair onto one equirectangular image.

    Every output direction is projected into both lenses; each lens
    contributes where the direction is inside its field of view, with a
    weight ramping linearly from 1 (blend_width inside the edge) to 0 (at
    the edge).  Output pixels nobody covers are black with mask false.

    Returns:
        (image (H, W, 3) uint8, mask (H, W) bool).

    Raises:
        DomainError: image dimensions disagree with the rig's cameras.
    """
    front_image = np.asarray(front_image)
    back_image = np.asarray(back_image)
    if front_image.shape[:2] != (rig.front.height, rig.front.width):
        raise DomainError("front image does not match front camera dimensions")
    if back_image.shape[:2] != (rig.back.height, rig.back.width):
        raise DomainError("back image does not match back camera dimensions")

    dirs = out.direction_grid()
    d_flat = dirs.reshape(-1, 3)
    back_in_front = rig.back_rotation
    d_back = back_in_front.inverse().rotate(d_flat)

    def lens_layer(cam, image, d):
        u, v, inside = cam.project(d)
        psi = np.arctan2(np.hypot(d[:, 0], d[:, 1]), d[:, 2])
        margin = cam.fov / 2.0 - psi
        weight = np.clip(margin / rig.blend_width, 0.0, 1.0)
        # edge-exact coverage: a direction exactly on the fov boundary is
        # still covered, with a vanishing but positive weight
        weight = np.where(inside & (weight <= 0), 1e-12, weight)
        weight = np.where(inside, weight, 0.0)
        u = np.clip(u, 0.0, cam.width - 1.0)
        v = np.clip(v, 0.0, cam.height - 1.0)
        samples = sample_bilinear_clamp(image, u, v)
        return weight, samples

    w_f, s_f = lens_layer(rig.front, front_image, d_flat)
    w_b, s_b = lens_layer(rig.back, back_image, d_back)
    total = w_f + w_b
    mask = total > 0
    denom = np.where(mask, total, 1.0)
    blended = (w_f[:, None] * s_f + w_b[:, None] * s_b) / denom[:, None]
    blended[~mask] = 0.0
    image = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    return image.reshape(out.height, out.width, 3), mask.reshape(out.height, out.width)
