"""Gradient training of a radiance field on posed panoramas.

The backward pass is written out by hand: photometric loss through the
compositor, the two network branches, and trilinear scatter into the
hash tables.  The optimizer is the usual adaptive-moment scheme, with a
sparse variant for the tables: only rows touched by the batch move, each
using the global step for bias correction, so untouched rows carry no
per-row bookkeeping.

Determinism: one generator drives ray picks then jitter, in that order,
each iteration; the table scatter parallelizes over levels only, so
results do not depend on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..geometry import EquirectCamera, quat_rotate
from ..manifest import PanoramaFrame
from .kernels import adam_sparse_step, encode_backward
from .model import RadianceField
from .network import sigmoid
from .rendering import composite, composite_backward, sample_ts
from .sh import sh_basis

NET_PARAMS = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "bg_logit")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; every field must be positive."""

    iterations: int
    rays_per_batch: int = 4096
    samples_per_ray: int = 48
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    seed: int = 0

    def __post_init__(self):
        for name in ("iterations", "rays_per_batch", "samples_per_ray"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if not (self.learning_rate > 0):
            raise DomainError("learning_rate must be positive")
        for name in ("beta1", "beta2"):
            if not (0 < getattr(self, name) < 1):
                raise DomainError(f"{name} must lie in (0, 1)")
        if not (self.eps > 0):
            raise DomainError("eps must be positive")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")


def loss_and_gradients(field: RadianceField, origins, directions, targets, ts, deltas):
    """Photometric loss and its gradient wrt every parameter.

    Deterministic in its inputs; the sampling positions come in from the
    caller so finite-difference checks can hold them fixed.

    Args:
        field: the field being trained (any dtype; float64 for checks).
        origins: (R, 3) ray origins.
        directions: (R, 3) unit ray directions.
        targets: (R, 3) reference colors in [0, 1].
        ts: (R, N) sample distances.
        deltas: (R, N) segment lengths.

    Returns:
        (loss, grads, touched): loss is the scalar mean squared error;
        grads maps "tables" plus each network parameter name to its
        gradient array; touched is the (L, T) uint8 row mask.
    """
    dtype = field.dtype
    n_rays, n_s = ts.shape
    net = field.net

    points = origins[:, None, :] + ts[:, :, None] * directions[:, None, :]
    norm, inside = field.normalize_positions(points.reshape(-1, 3))
    norm = np.ascontiguousarray(norm, dtype=dtype)
    feat = field.encode(norm)
    sigma_all, raw, geo, h1 = net.density_forward(feat)
    sh = np.repeat(sh_basis(directions.astype(dtype)), n_s, axis=0)
    rgb, color_cache = net.color_forward(geo, sh)

    # out-of-bounds samples contribute nothing: zero density kills both
    # their weight and, below, their gradient path
    sigma = np.where(inside, sigma_all, 0).reshape(n_rays, n_s)
    rgb_r = rgb.reshape(n_rays, n_s, 3)
    comp = composite(sigma, rgb_r, deltas, net.background)

    residual = comp["color"] - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(residual**2))
    d_color = (2.0 / residual.size) * residual

    d_sigma, d_rgb, d_bg = composite_backward(d_color, comp, rgb_r, deltas, net.background)
    draw = np.where(inside, d_sigma.reshape(-1) * sigmoid(raw.astype(np.float64)), 0.0)
    dgeo, grads_color = net.color_backward(color_cache, d_rgb.reshape(-1, 3).astype(dtype), rgb)
    dfeat, grads_density = net.density_backward(feat, h1, draw.astype(dtype), dgeo)

    grad_tables = np.zeros_like(field.grid.tables)
    touched = np.zeros(grad_tables.shape[:2], dtype=np.uint8)
    encode_backward(
        norm,
        np.ascontiguousarray(dfeat, dtype=dtype),
        field.grid.config.resolutions,
        grad_tables,
        touched,
    )

    bg = net.background.astype(np.float64)
    grads = {"tables": grad_tables, "bg_logit": (d_bg * bg * (1.0 - bg)).astype(dtype)}
    grads.update({k: v for k, v in grads_density.items()})
    grads.update({k: v for k, v in grads_color.items()})
    return loss, grads, touched


class MomentOptimizer:
    """Adaptive-moment updates over a field's parameters.

    Table rows untouched by a batch are skipped entirely; touched rows
    are bias-corrected with the global step count.
    """

    def __init__(self, field: RadianceField, config: TrainConfig):
        self.config = config
        self.step = 0
        self.table_m = np.zeros_like(field.grid.tables)
        self.table_v = np.zeros_like(field.grid.tables)
        self.net_m = {n: np.zeros_like(getattr(field.net, n)) for n in NET_PARAMS}
        self.net_v = {n: np.zeros_like(getattr(field.net, n)) for n in NET_PARAMS}

    def apply(self, field: RadianceField, grads: dict, touched: np.ndarray) -> None:
        cfg = self.config
        self.step += 1
        scale = cfg.learning_rate * np.sqrt(1.0 - cfg.beta2**self.step) / (1.0 - cfg.beta1**self.step)

        adam_sparse_step(
            field.grid.tables,
            grads["tables"],
            self.table_m,
            self.table_v,
            touched,
            float(scale),
            cfg.beta1,
            cfg.beta2,
            cfg.eps,
        )

        for name in NET_PARAMS:
            g = grads[name]
            m = self.net_m[name]
            v = self.net_v[name]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            param = getattr(field.net, name)
            param -= (scale * m / (np.sqrt(v) + cfg.eps)).astype(param.dtype)


def valid_ray_ids(frames: list[PanoramaFrame]) -> np.ndarray:
    """Flat (frame * pixels + pixel) indices of every unmasked pixel.

    This is the whole sampling pool: masked pixels can never become
    training rays because they are absent from it.
    """
    masks = np.stack([fr.mask for fr in frames])
    return np.flatnonzero(masks.reshape(-1))


def _ray_intervals(field: RadianceField, origins, directions):
    """Clip [t_near, t_far] to each ray's overlap with the bounds."""
    enter, exit_ = field.bounds.ray_range(origins, directions)
    t0 = np.maximum(field.t_near, enter)
    t1 = np.minimum(field.t_far, exit_)
    miss = t1 <= t0
    t0 = np.where(miss, field.t_near, t0)
    t1 = np.where(miss, field.t_near * (1 + 1e-6) + 1e-9, t1)
    return t0, t1


def train(
    field: RadianceField,
    frames: list[PanoramaFrame],
    config: TrainConfig,
    progress=None,
) -> np.ndarray:
    """Fit the field to posed panoramas by stochastic gradient descent.

    Each iteration draws rays_per_batch (frame, pixel) pairs uniformly
    from the unmasked pixels, renders them with stratified jitter, and
    steps every touched parameter.  The field is updated in place.

    Args:
        field: field to optimize (mutated).
        frames: posed panoramas sharing one resolution.
        config: optimization settings.
        progress: optional callable(iteration, loss), called every
            iteration after the update.

    Returns:
        (iterations,) float64 loss curve.

    Raises:
        DomainError: no frames, mixed resolutions, or no unmasked pixels.
    """
    if not frames:
        raise DomainError("training needs at least one frame")
    height, width = frames[0].image.shape[:2]
    for fr in frames:
        if fr.image.shape[:2] != (height, width):
            raise DomainError("all frames must share one camera resolution")
    cam = EquirectCamera(width, height)

    images = np.stack([fr.image for fr in frames]).reshape(len(frames), -1, 3)
    valid = valid_ray_ids(frames)
    if valid.size == 0:
        raise DomainError("every pixel is masked; nothing to train on")
    quats = np.stack([fr.pose.q for fr in frames])
    trans = np.stack([fr.pose.t for fr in frames])

    pixels_per_frame = height * width
    rng = np.random.default_rng(config.seed)
    optimizer = MomentOptimizer(field, config)
    losses = np.empty(config.iterations)

    for it in range(config.iterations):
        ids = valid[rng.integers(0, valid.size, config.rays_per_batch)]
        fids = ids // pixels_per_frame
        pix = ids % pixels_per_frame
        dirs = cam.pixel_to_direction(pix % width, pix // width)
        dirs = quat_rotate(quats[fids], dirs)
        origins = trans[fids]
        targets = images[fids, pix].astype(np.float64) / 255.0

        t0, t1 = _ray_intervals(field, origins, dirs)
        ts, deltas = sample_ts(t0, t1, config.samples_per_ray, rng=rng)
        loss, grads, touched = loss_and_gradients(field, origins, dirs, targets, ts, deltas)
        optimizer.apply(field, grads, touched)
        losses[it] = loss
        if progress is not None:
            progress(it, loss)
    return losses
