"""Choosing which frames to match: keyframes over time, then per-keyframe
neighbor views."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..manifest import PanoramaFrame
from .types import MatchConfig


def select_keyframes(
    frames: list[PanoramaFrame], min_baseline: float, min_sharpness_quantile: float = 0.0
) -> list[PanoramaFrame]:
    """Greedy keyframe pick in time order.

    A frame is accepted when its position is at least min_baseline away
    from every frame accepted so far and its sharpness reaches the
    dataset's min_sharpness_quantile.  The quantile cut is inclusive, so
    a constant-sharpness dataset never filters to nothing.

    Raises:
        DomainError: no frames, nonpositive baseline, quantile outside
            [0, 1], or an empty result.
    """
    if not frames:
        raise DomainError("keyframe selection needs at least one frame")
    if not (min_baseline > 0):
        raise DomainError("min_baseline must be positive")
    if not (0 <= min_sharpness_quantile <= 1):
        raise DomainError("min_sharpness_quantile must lie in [0, 1]")
    threshold = float(np.quantile([f.sharpness for f in frames], min_sharpness_quantile))
    accepted: list[PanoramaFrame] = []
    for frame in frames:
        if frame.sharpness < threshold:
            continue
        if all(
            np.linalg.norm(frame.pose.t - kept.pose.t) >= min_baseline for kept in accepted
        ):
            accepted.append(frame)
    if not accepted:
        raise DomainError(
            "no keyframes survived; lower min_baseline or min_sharpness_quantile"
        )
    return accepted


def view_score(ref: PanoramaFrame, candidate: PanoramaFrame, cfg: MatchConfig) -> float:
    """Stereo suitability of a candidate view for a reference.

    The score is the product of a baseline term and an orientation term.
    Baselines inside [0.05, 0.5] x d_mid score 1, falling off linearly
    below the band (b / lo) and harmonically above it (hi / b); a zero
    baseline scores 0.  The orientation term is (1 + cos delta) / 2 with
    delta the relative rotation angle, discouraging views that spin the
    panorama far from the reference.
    """
    b = float(np.linalg.norm(candidate.pose.t - ref.pose.t))
    lo = 0.05 * cfg.d_mid
    hi = 0.5 * cfg.d_mid
    if b <= 0:
        return 0.0
    if b < lo:
        band = b / lo
    elif b <= hi:
        band = 1.0
    else:
        band = hi / b
    dot = abs(float(np.dot(ref.pose.q, candidate.pose.q)))
    delta = 2.0 * np.arccos(min(1.0, dot))
    return band * 0.5 * (1.0 + np.cos(delta))


def select_views(
    ref: PanoramaFrame, keyframes: list[PanoramaFrame], cfg: MatchConfig
) -> list[PanoramaFrame]:
    """Top-scoring stereo partners for a reference frame.

    Returns up to cfg.neighbors frames ordered best first; the reference
    itself and zero-score candidates (no usable baseline) are dropped,
    so fewer may come back.  Ties keep the earlier candidate.
    """
    scored = []
    for index, cand in enumerate(keyframes):
        if cand is ref:
            continue
        s = view_score(ref, cand, cfg)
        if s > 0:
            scored.append((-s, index, cand))
    scored.sort(key=lambda item: (item[0], item[1]))
    return [cand for _, _, cand in scored[: cfg.neighbors]]
