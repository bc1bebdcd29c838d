"""Geometric consistency filtering and multi-map fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..cloud import PointCloud
from ..errors import DomainError
from ..geometry import EquirectCamera, Pose
from .types import DepthMap, MatchConfig

__all__ = ["SPECKLE_MIN_PIXELS", "clean_depth", "fuse", "FusedCloud"]

# connected valid regions smaller than this many pixels are dropped
SPECKLE_MIN_PIXELS = 16


def _backproject(dm: DepthMap, pose: Pose, rays: np.ndarray) -> np.ndarray:
    """World-frame points for every pixel of a depth map, shape (H, W, 3)."""
    cam_points = dm.depth[..., None] * rays
    return cam_points @ pose.rotation.T + pose.t


def clean_depth(
    maps: list[DepthMap], poses: list[Pose], cfg: MatchConfig
) -> list[DepthMap]:
    """Invalidate pixels other depth maps do not confirm.

    A valid pixel of one map is confirmed by another map when its world
    point, seen from that map's camera, lands on a valid pixel whose
    depth agrees within cfg.consistency_threshold (relative).  Pixels
    confirmed by fewer than cfg.min_consistent_views maps are dropped,
    then connected valid regions smaller than SPECKLE_MIN_PIXELS go too.

    The result never marks a pixel valid that was invalid before.

    Args:
        maps: depth maps, one per reference frame.
        poses: camera-to-world pose of each map, aligned with maps.
        cfg: consistency settings.

    Returns:
        New DepthMap list; invalidated pixels get depth 0 and cost 1.
    """
    if len(maps) < 2:
        raise DomainError("consistency filtering needs at least two depth maps")
    if len(poses) != len(maps):
        raise DomainError("need one pose per depth map")
    shape = maps[0].depth.shape
    for dm in maps:
        if dm.depth.shape != shape:
            raise DomainError("all depth maps must share one resolution")

    h, w = shape
    cam = EquirectCamera(width=w, height=h)
    rays = cam.direction_grid()
    world = [_backproject(dm, pose, rays) for dm, pose in zip(maps, poses)]

    cleaned = []
    for i, dm in enumerate(maps):
        votes = np.zeros(shape, dtype=np.int64)
        pts = world[i]
        for j, other in enumerate(maps):
            if j == i:
                continue
            pose_j = poses[j]
            local = (pts - pose_j.t) @ pose_j.rotation
            rng = np.linalg.norm(local, axis=-1)
            safe = np.where(rng == 0, 1.0, rng)
            u, v = cam.direction_to_pixel(local / safe[..., None])
            cols = np.rint(u).astype(np.int64) % w
            rows = np.clip(np.rint(v).astype(np.int64), 0, h - 1)
            d_other = other.depth[rows, cols]
            agree = (d_other > 0) & (
                np.abs(rng - d_other) <= cfg.consistency_threshold * d_other
            )
            votes += agree
        keep = dm.valid & (votes >= cfg.min_consistent_views)

        labels, count = ndimage.label(keep)
        if count:
            sizes = np.bincount(labels.ravel())
            small = sizes < SPECKLE_MIN_PIXELS
            small[0] = False
            keep &= ~small[labels]

        cleaned.append(
            DepthMap(
                depth=np.where(keep, dm.depth, 0.0),
                normal=dm.normal,
                cost=np.where(keep, dm.cost, 1.0),
                reference=dm.reference,
            )
        )
    return cleaned


@dataclass(frozen=True)
class FusedCloud:
    """Fusion result: one point per occupied voxel."""

    cloud: PointCloud
    voxel: float

    def __post_init__(self):
        if not (self.voxel > 0):
            raise DomainError(f"voxel size {self.voxel} must be positive")


def fuse(maps: list[DepthMap], frames, voxel: float) -> FusedCloud:
    """Merge depth maps into one deduplicated colored point cloud.

    Every valid pixel back-projects to a world point carrying the
    frame's color and the normal rotated into the world frame.  Points
    landing in the same voxel collapse to the one with the lowest
    matching cost (ties broken by input order, so the result is
    deterministic).

    Args:
        maps: depth maps, ideally cleaned first.
        frames: panorama frames aligned with maps (pose and color source).
        voxel: cell edge length, meters.

    Returns:
        FusedCloud with positions, colors, and world-frame normals.
    """
    if not (voxel > 0):
        raise DomainError(f"voxel size {voxel} must be positive")
    if len(frames) != len(maps):
        raise DomainError("need one frame per depth map")

    all_pos = []
    all_col = []
    all_nrm = []
    all_cost = []
    for dm, frame in zip(maps, frames):
        keep = dm.valid
        if not np.any(keep):
            continue
        h, w = dm.depth.shape
        cam = EquirectCamera(width=w, height=h)
        rays = cam.direction_grid()
        pts = _backproject(dm, frame.pose, rays)
        r = frame.pose.rotation
        all_pos.append(pts[keep])
        all_col.append(frame.image[keep])
        all_nrm.append(dm.normal[keep] @ r.T)
        all_cost.append(dm.cost[keep])

    if not all_pos:
        return FusedCloud(cloud=PointCloud.empty(), voxel=voxel)

    pos = np.concatenate(all_pos).astype(np.float32)
    col = np.concatenate(all_col)
    nrm = np.concatenate(all_nrm)
    cost = np.concatenate(all_cost)

    keys = np.floor(pos.astype(np.float64) / voxel).astype(np.int64)
    # order by (voxel, cost, arrival); the first row of each voxel wins
    order = np.lexsort((np.arange(len(pos)), cost, keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    first = np.ones(len(pos), dtype=bool)
    first[1:] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    chosen = order[first]

    cloud = PointCloud(
        positions=pos[chosen],
        colors=col[chosen],
        normals=nrm[chosen].astype(np.float32),
    )
    return FusedCloud(cloud=cloud, voxel=voxel)
