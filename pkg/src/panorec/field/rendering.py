"""Volume rendering along rays: stratified sampling, alpha compositing,
and the hand-written backward pass used by training.

Compositing follows the standard emission-absorption model.  For samples
t_0 < ... < t_{N-1} with densities sigma_i and segment lengths
delta_i = t_{i+1} - t_i (the last segment runs to the far bound):

    alpha_i = 1 - exp(-sigma_i * delta_i)
    T_i     = prod_{j < i} (1 - alpha_j)        (exclusive transmittance)
    color   = sum_i T_i alpha_i c_i + T_final * background

The weights T_i alpha_i telescope, so opacity + T_final == 1 exactly up
to rounding, which the tests pin.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..geometry import EquirectCamera, Pose
from .model import RadianceField
from .sh import sh_basis

_DEPTH_EPS = 1e-10


def sample_ts(t0, t1, n_samples: int, rng: np.random.Generator = None):
    """Stratified sample positions along per-ray intervals.

    Each interval [t0, t1] is split into n_samples equal bins and one t
    is drawn per bin: jittered uniformly when rng is given (training),
    at the bin midpoint otherwise (evaluation).

    Args:
        t0: (R,) near bounds, meters.
        t1: (R,) far bounds, strictly greater than t0.
        n_samples: bins per ray.
        rng: jitter source, or None for midpoints.

    Returns:
        (ts, deltas), both (R, n_samples).  deltas[:, i] is
        ts[:, i+1] - ts[:, i]; the last entry runs to t1.
    """
    t0 = np.asarray(t0, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    if n_samples < 1:
        raise DomainError(f"need at least one sample per ray, got {n_samples}")
    if np.any(t1 <= t0):
        raise DomainError("sample interval is empty: t1 <= t0")
    n_rays = t0.shape[0]
    if rng is None:
        u = np.full((n_rays, n_samples), 0.5)
    else:
        u = rng.random((n_rays, n_samples))
    offsets = (np.arange(n_samples) + u) / n_samples
    ts = t0[:, None] + (t1 - t0)[:, None] * offsets
    deltas = np.empty_like(ts)
    deltas[:, :-1] = np.diff(ts, axis=1)
    deltas[:, -1] = t1 - ts[:, -1]
    return ts, deltas


def composite(sigma, rgb, deltas, background):
    """Alpha-composite per-sample densities and colors into ray colors.

    Args:
        sigma: (R, N) nonnegative densities.
        rgb: (R, N, 3) per-sample colors in [0, 1].
        deltas: (R, N) segment lengths, meters.
        background: (3,) color weighted by residual transmittance.

    Returns:
        Dict with color (R, 3), opacity (R,), weights (R, N),
        trans (R, N) exclusive transmittance, t_final (R,) residual
        transmittance, and alpha (R, N).  Expected depth needs the
        sample positions too; see composite_depth.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    alpha = -np.expm1(-sigma * deltas)
    one_minus = 1.0 - alpha
    trans = np.cumprod(one_minus, axis=1)
    t_final = trans[:, -1].copy()
    # exclusive: T_0 = 1, T_i = prod_{j<i}
    trans = np.roll(trans, 1, axis=1)
    trans[:, 0] = 1.0
    weights = trans * alpha
    color = np.einsum("rn,rnc->rc", weights, rgb) + t_final[:, None] * background
    opacity = weights.sum(axis=1)
    return {
        "color": color,
        "opacity": opacity,
        "weights": weights,
        "trans": trans,
        "t_final": t_final,
        "alpha": alpha,
    }


def composite_depth(weights, opacity, ts):
    """Expected termination distance sum(w_i t_i) / max(opacity, eps)."""
    num = np.einsum("rn,rn->r", np.asarray(weights, dtype=np.float64), np.asarray(ts, dtype=np.float64))
    return num / np.maximum(opacity, _DEPTH_EPS)


def composite_backward(d_color, comp, rgb, deltas, background):
    """Gradients of the composite color wrt densities, colors, background.

    Uses the closed form d color / d sigma_k = delta_k * (T_{k+1} c_k - S_k)
    where S_k collects every contribution downstream of sample k
    (including the background term), computed as a reverse cumulative sum.

    Args:
        d_color: (R, 3) upstream gradient.
        comp: the dict returned by composite.
        rgb: (R, N, 3) colors given to composite.
        deltas: (R, N) segment lengths given to composite.
        background: (3,) color given to composite.

    Returns:
        (d_sigma (R, N), d_rgb (R, N, 3), d_background (3,)), where
        d_background is already summed over rays.
    """
    d_color = np.asarray(d_color, dtype=np.float64)
    rgb = np.asarray(rgb, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    weights = comp["weights"]
    trans = comp["trans"]
    alpha = comp["alpha"]
    t_final = comp["t_final"]

    d_rgb = weights[:, :, None] * d_color[:, None, :]
    d_background = (t_final[:, None] * d_color).sum(axis=0)

    # per-channel suffix: S_k = sum_{i>k} w_i c_i + T_final * bg
    contrib = weights[:, :, None] * rgb
    suffix = np.cumsum(contrib[:, ::-1, :], axis=1)[:, ::-1, :]
    suffix = suffix - contrib + t_final[:, None, None] * background[None, None, :]
    t_next = trans * (1.0 - alpha)  # inclusive transmittance T_{k+1}
    d_color_d_sigma = deltas[:, :, None] * (t_next[:, :, None] * rgb - suffix)
    d_sigma = np.einsum("rnc,rc->rn", d_color_d_sigma, d_color)
    return d_sigma, d_rgb, d_background


def render_rays(
    field: RadianceField,
    origins: np.ndarray,
    directions: np.ndarray,
    n_samples: int,
    rng: np.random.Generator = None,
):
    """Render a batch of rays against a field (inference path).

    Sampling is confined to where each ray overlaps the field bounds,
    clipped to [t_near, t_far]; rays that miss entirely get a degenerate
    interval near the origin, where density is zero by construction, so
    they come out as pure background.

    Args:
        field: the radiance field.
        origins: (R, 3) ray origins.
        directions: (R, 3) unit ray directions.
        n_samples: samples per ray.
        rng: stratified jitter source, or None for midpoints.

    Returns:
        Dict with color (R, 3), depth (R,), opacity (R,), all float64.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n_rays = origins.shape[0]

    enter, exit_ = field.bounds.ray_range(origins, directions)
    t0 = np.maximum(field.t_near, enter)
    t1 = np.minimum(field.t_far, exit_)
    miss = t1 <= t0
    t0 = np.where(miss, field.t_near, t0)
    t1 = np.where(miss, field.t_near * (1 + 1e-6) + 1e-9, t1)

    ts, deltas = sample_ts(t0, t1, n_samples, rng=rng)
    points = origins[:, None, :] + ts[:, :, None] * directions[:, None, :]
    dirs_flat = np.repeat(directions, n_samples, axis=0)
    sigma, rgb = field.query(points.reshape(-1, 3), dirs_flat)
    sigma = sigma.reshape(n_rays, n_samples)
    rgb = rgb.reshape(n_rays, n_samples, 3)

    comp = composite(sigma, rgb, deltas, field.net.background)
    depth = composite_depth(comp["weights"], comp["opacity"], ts)
    return {"color": comp["color"], "depth": depth, "opacity": comp["opacity"]}


def render_panorama_view(
    field: RadianceField,
    pose: Pose,
    cam: EquirectCamera,
    n_samples: int,
    batch_size: int = 8192,
):
    """Render a full equirectangular view from a pose.

    Args:
        field: the radiance field.
        pose: camera-to-world pose.
        cam: output panorama geometry.
        n_samples: samples per ray (midpoint mode: deterministic).
        batch_size: rays per chunk, to bound memory.

    Returns:
        (image (H, W, 3) float in [0, 1], depth (H, W), opacity (H, W)).
    """
    dirs = cam.direction_grid().reshape(-1, 3)
    dirs = pose.rotate(dirs)
    origins = np.broadcast_to(pose.t, dirs.shape)
    color = np.empty((dirs.shape[0], 3))
    depth = np.empty(dirs.shape[0])
    opacity = np.empty(dirs.shape[0])
    for start in range(0, dirs.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        out = render_rays(field, origins[sl], dirs[sl], n_samples)
        color[sl] = out["color"]
        depth[sl] = out["depth"]
        opacity[sl] = out["opacity"]
    shape = (cam.height, cam.width)
    return (
        np.clip(color, 0.0, 1.0).reshape(shape + (3,)),
        depth.reshape(shape),
        opacity.reshape(shape),
    )


def psnr(image: np.ndarray, reference: np.ndarray, mask: np.ndarray = None) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Args:
        image: (H, W, 3) or (H, W) values in [0, 1].
        reference: same shape.
        mask: optional (H, W) boolean; the error is averaged over true
            pixels only.  Must select at least one pixel.

    Returns:
        dB value; +inf when the compared pixels are identical.
    """
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise DomainError(f"shape mismatch {image.shape} vs {reference.shape}")
    diff = (image - reference) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != image.shape[:2]:
            raise DomainError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
        if not mask.any():
            raise DomainError("psnr mask selects no pixels")
        diff = diff[mask]
    mse = float(np.mean(diff))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
