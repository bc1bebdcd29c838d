"""Shared types for the panoramic stereo pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError


@dataclass(frozen=True)
class MatchConfig:
    """Settings for matching, cleaning, and fusion.

    Attributes:
        d_min, d_max: depth search range, meters.
        patch_radius: half-extent of the square comparison patch; taps
            are spaced one pixel's angle apart on the unit sphere.
        iterations: propagation sweeps (0 keeps the random init).
        neighbors: views matched against each reference (K).
        cost_max: pixels whose final cost exceeds this are invalid.
        consistency_threshold: relative depth agreement for a pixel to
            count as confirmed by another map.
        min_consistent_views: confirmations required to survive cleaning.
        seed: random-number seed (init and perturbation).
    """

    d_min: float
    d_max: float
    patch_radius: int = 5
    iterations: int = 4
    neighbors: int = 4
    cost_max: float = 0.3
    consistency_threshold: float = 0.02
    min_consistent_views: int = 2
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise DomainError(f"need 0 < d_min < d_max, got {self.d_min}..{self.d_max}")
        if self.patch_radius < 1:
            raise DomainError("patch_radius must be >= 1")
        if self.iterations < 0:
            raise DomainError("iterations must be >= 0")
        if self.neighbors < 1:
            raise DomainError("neighbors must be >= 1")
        if not (0 < self.cost_max <= 1):
            raise DomainError("cost_max must lie in (0, 1]")
        if not (self.consistency_threshold > 0):
            raise DomainError("consistency_threshold must be positive")
        if self.min_consistent_views < 1:
            raise DomainError("min_consistent_views must be >= 1")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")

    @property
    def d_mid(self) -> float:
        """Geometric mean of the depth range; anchors the baseline band."""
        return float(np.sqrt(self.d_min * self.d_max))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth hypothesis for one reference panorama.

    Attributes:
        depth: (H, W) meters along each pixel ray; 0 marks invalid.
        normal: (H, W, 3) unit surface normals in the reference camera
            frame, meaningful only where depth is valid.
        cost: (H, W) matching cost in [0, 1]; 1 where invalid.
        reference: frame id this map belongs to.
    """

    depth: np.ndarray
    normal: np.ndarray
    cost: np.ndarray
    reference: int

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        c = np.asarray(self.cost, dtype=np.float64)
        if d.ndim != 2 or n.shape != d.shape + (3,) or c.shape != d.shape:
            raise DomainError("depth/normal/cost shapes disagree")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise DomainError("depths must be finite and nonnegative")
        if np.any(c < 0) or np.any(c > 1):
            raise DomainError("costs must lie in [0, 1]")
        valid = d > 0
        if valid.any():
            norms = np.linalg.norm(n[valid], axis=-1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise DomainError("normals must be unit length where depth is valid")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "cost", c)

    @property
    def valid(self) -> np.ndarray:
        """(H, W) boolean validity mask."""
        return self.depth > 0
