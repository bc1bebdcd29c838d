"""Turning a trained field into an explicit point cloud."""

from __future__ import annotations

import warnings

import numpy as np

from ..cloud import PointCloud
from ..errors import DomainError
from ..geometry import normalize
from .model import RadianceField

# fixed viewing direction for coloring exported points: looking down at
# a diagonal, so horizontal and vertical surfaces both get plausible shade
DOWN_DIAGONAL = normalize(np.array([1.0, -1.0, 1.0]))

COLOR_MODES = ("view", "gray")

_CHUNK = 65536


def export_pointcloud(
    field: RadianceField,
    grid_resolution: int,
    density_threshold: float,
    color_mode: str = "view",
) -> PointCloud:
    """Sample the field on a regular grid and keep the dense cells.

    One candidate point per cell center, so the output is voxel-unique
    by construction.  "view" colors by querying the field with a fixed
    downward-diagonal direction; "gray" encodes relative density.

    Args:
        field: the field to sample.
        grid_resolution: cells per axis (>= 2).
        density_threshold: keep cells with sigma >= this.
        color_mode: "view" or "gray".

    Returns:
        PointCloud; empty (with a warning) when nothing clears the
        threshold.
    """
    if grid_resolution < 2:
        raise DomainError(f"grid_resolution {grid_resolution} must be >= 2")
    if color_mode not in COLOR_MODES:
        raise DomainError(f"color_mode {color_mode!r} not one of {COLOR_MODES}")

    r = int(grid_resolution)
    axes = [
        field.bounds.lo[i] + (np.arange(r) + 0.5) * (field.bounds.size[i] / r)
        for i in range(3)
    ]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    kept_points = []
    kept_sigma = []
    kept_rgb = []
    for start in range(0, centers.shape[0], _CHUNK):
        chunk = centers[start : start + _CHUNK]
        sigma, rgb = field.query(chunk, DOWN_DIAGONAL)
        keep = sigma >= density_threshold
        if keep.any():
            kept_points.append(chunk[keep])
            kept_sigma.append(sigma[keep])
            kept_rgb.append(rgb[keep])

    if not kept_points:
        warnings.warn("no cell cleared the density threshold; exporting an empty cloud")
        return PointCloud.empty()

    points = np.concatenate(kept_points).astype(np.float32)
    sigma = np.concatenate(kept_sigma).astype(np.float64)
    if color_mode == "view":
        colors = np.rint(np.clip(np.concatenate(kept_rgb), 0, 1) * 255).astype(np.uint8)
    else:
        shade = np.rint(255 * sigma / sigma.max()).astype(np.uint8)
        colors = np.repeat(shade[:, None], 3, axis=1)
    return PointCloud(positions=points, colors=colors)
