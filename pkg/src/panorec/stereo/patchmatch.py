"""PatchMatch multi-view stereo on equirectangular panoramas.

Each pixel carries a plane hypothesis (inverse depth along the pixel
ray plus a unit normal in the reference camera frame).  Hypotheses are
scored by warping a small tangent-space patch into the neighbor views
and measuring normalized-correlation photoconsistency, then improved by
propagating neighbor planes and random perturbation over a few sweeps.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import DomainError
from ..geometry import EquirectCamera, Pose
from ..images import to_gray
from .kernels import patchmatch_sweep
from .types import DepthMap, MatchConfig

__all__ = ["match_panoramas", "patchmatch_depth"]


def _patch_basis(rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel tangent frame (e1, e2) orthogonal to the viewing ray.

    e1 is horizontal (ray x up) away from the poles and switches to a
    fixed fallback axis where the ray is nearly vertical.
    """
    up = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(np.broadcast_to(up, rays.shape), rays)
    bad = np.linalg.norm(e1, axis=-1) < 1e-8
    if np.any(bad):
        alt = np.cross(np.array([1.0, 0.0, 0.0]), rays[bad])
        e1[bad] = alt
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(rays, e1)
    e2 /= np.linalg.norm(e2, axis=-1, keepdims=True)
    return e1, e2


def match_panoramas(
    ref_gray: np.ndarray,
    ref_mask: np.ndarray,
    ref_pose: Pose,
    view_grays: np.ndarray,
    view_masks: np.ndarray,
    view_poses: list[Pose],
    cfg: MatchConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run PatchMatch and return raw (depth, normal, cost) maps.

    Args:
        ref_gray: (H, W) float32 luma in [0, 1] for the reference.
        ref_mask: (H, W) uint8, nonzero where pixels are usable.
        ref_pose: reference camera-to-world pose.
        view_grays: (V, H, W) float32 lumas of the neighbor views.
        view_masks: (V, H, W) uint8 masks of the neighbor views.
        view_poses: camera-to-world poses of the neighbor views.
        cfg: search range and sweep schedule.

    Returns:
        depth (H, W) float64 along-ray distances in [d_min, d_max],
        normal (H, W, 3) float64 unit normals in the reference camera
        frame, and cost (H, W) float64 in [0, 1].  No validity filtering
        happens here; every pixel keeps its best hypothesis.
    """
    h, w = ref_gray.shape
    n_views = view_grays.shape[0]
    if n_views == 0:
        raise DomainError("match_panoramas needs at least one neighbor view")
    if len(view_poses) != n_views or view_masks.shape[0] != n_views:
        raise DomainError("view arrays and poses disagree on view count")

    cam = EquirectCamera(width=w, height=h)
    rays = cam.direction_grid()
    e1s, e2s = _patch_basis(rays)

    # reference-camera point X maps into view v as R_v^T (R_ref X + c_ref - c_v)
    r_ref = ref_pose.rotation
    rot = np.empty((n_views, 3, 3))
    off = np.empty((n_views, 3))
    for i, pose in enumerate(view_poses):
        r_v = pose.rotation
        rot[i] = r_v.T @ r_ref
        off[i] = r_v.T @ (ref_pose.t - pose.t)

    rng = np.random.default_rng(cfg.seed)
    inv_lo = 1.0 / cfg.d_max
    inv_hi = 1.0 / cfg.d_min
    cur_inv = rng.uniform(inv_lo, inv_hi, size=(h, w))
    # random normals in a 60-degree cone about the reverse ray, so every
    # starting plane faces the camera
    cos_t = rng.uniform(0.5, 1.0, size=(h, w, 1))
    sin_t = np.sqrt(1.0 - cos_t**2)
    azim = rng.uniform(0.0, 2.0 * np.pi, size=(h, w, 1))
    cur_nrm = cos_t * (-rays) + sin_t * (np.cos(azim) * e1s + np.sin(azim) * e2s)
    cur_nrm /= np.linalg.norm(cur_nrm, axis=-1, keepdims=True)
    cur_cost = np.ones((h, w))

    nxt_inv = np.empty_like(cur_inv)
    nxt_nrm = np.empty_like(cur_nrm)
    nxt_cost = np.empty_like(cur_cost)
    zero_inv = np.zeros((h, w))
    zero_nrm = np.zeros((h, w, 3))
    step = 2.0 * np.pi / w

    def _sweep(jit_inv, jit_n, refine, jump):
        nonlocal cur_inv, cur_nrm, cur_cost, nxt_inv, nxt_nrm, nxt_cost
        patchmatch_sweep(
            rays, e1s, e2s, ref_gray, ref_mask, view_grays, view_masks,
            rot, off, step, cfg.patch_radius, cfg.d_min, cfg.d_max,
            cur_inv, cur_nrm, cur_cost, nxt_inv, nxt_nrm, nxt_cost,
            jit_inv, jit_n, refine, jump,
        )
        cur_inv, nxt_inv = nxt_inv, cur_inv
        cur_nrm, nxt_nrm = nxt_nrm, cur_nrm
        cur_cost, nxt_cost = nxt_cost, cur_cost

    # score the random init so propagation has honest costs to beat
    _sweep(zero_inv, zero_nrm, 0, 1)
    for k in range(cfg.iterations):
        shrink = 0.5**k
        w_inv = (inv_hi - inv_lo) / 4.0 * shrink
        jit_inv = rng.uniform(-1.0, 1.0, size=(h, w)) * w_inv
        jit_n = rng.standard_normal(size=(h, w, 3)) * (0.5 * shrink)
        jump = max(1, (h // 4) >> k)
        _sweep(jit_inv, jit_n, 1, jump)

    return 1.0 / cur_inv, cur_nrm, cur_cost


def patchmatch_depth(ref, views, cfg: MatchConfig) -> DepthMap:
    """Estimate a depth map for one panorama from its neighbor views.

    Args:
        ref: reference frame (image, mask, pose, timestamp_index).
        views: neighbor frames at the same resolution.
        cfg: matching parameters.

    Returns:
        DepthMap in the reference frame; pixels whose best cost exceeds
        cfg.cost_max or that are masked out in the reference come back
        invalid (depth 0, cost 1).
    """
    if not views:
        raise DomainError("patchmatch_depth needs at least one neighbor view")
    shape = ref.image.shape[:2]
    for v in views:
        if v.image.shape[:2] != shape:
            raise DomainError(
                f"view resolution {v.image.shape[:2]} differs from reference {shape}"
            )

    ref_gray = (to_gray(ref.image) / 255.0).astype(np.float32)
    ref_mask = ref.mask.astype(np.uint8)
    view_grays = np.stack(
        [(to_gray(v.image) / 255.0).astype(np.float32) for v in views]
    )
    view_masks = np.stack([v.mask.astype(np.uint8) for v in views])

    depth, normal, cost = match_panoramas(
        ref_gray, ref_mask, ref.pose, view_grays, view_masks,
        [v.pose for v in views], cfg,
    )

    valid = (cost <= cfg.cost_max) & ref.mask
    if not np.any(valid):
        warnings.warn("no pixel passed the matching cost threshold", stacklevel=2)
    depth = np.where(valid, depth, 0.0)
    cost = np.where(valid, np.clip(cost, 0.0, 1.0), 1.0)
    return DepthMap(depth=depth, normal=normal, cost=cost, reference=ref.timestamp_index)
