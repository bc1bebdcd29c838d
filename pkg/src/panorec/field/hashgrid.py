"""Multiresolution hash-grid position encoding.

A point in the unit cube is looked up at L resolutions; at each level the
8 surrounding lattice corners index a small table of learnable feature
vectors, trilinearly blended.  Coarse levels fit in their own dense block
of the table; fine levels wrap through a spatial hash and share entries.

Indexing, pinned for checkpoint compatibility:
  - hash levels: h(x,y,z) = (x*p1 XOR y*p2 XOR z*p3) mod T with
    p1 = 1, p2 = 2654435761, p3 = 805459861, computed in uint32.
  - dense levels (N_l^3 <= T): idx = (x + y*s + z*s^2) mod T with
    s = N_l + 1 (corners run 0..N_l inclusive).

This module holds the numpy reference implementation, including analytic
input gradients for verification; the training path uses the fused
kernels in kernels.py, which must agree with this one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError

HASH_P1 = np.uint32(1)
HASH_P2 = np.uint32(2654435761)
HASH_P3 = np.uint32(805459861)


def level_resolutions(levels: int, base: int, maximum: int) -> np.ndarray:
    """Per-level lattice resolutions N_l = floor(base * b**l) with
    geometric growth b chosen so the last level lands on `maximum`."""
    if levels == 1:
        return np.array([base], dtype=np.int64)
    b = np.exp((np.log(maximum) - np.log(base)) / (levels - 1))
    # the exact value at integer powers can fall a hair under the intended
    # integer in floating point; nudge before flooring
    return np.floor(base * b ** np.arange(levels) + 1e-6).astype(np.int64)


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    table_size: int = 2**19
    features_per_level: int = 2
    base_resolution: int = 16
    max_resolution: int = 2048

    def __post_init__(self):
        if self.levels < 1:
            raise DomainError(f"levels {self.levels} must be >= 1")
        if self.table_size < 2 or self.table_size & (self.table_size - 1):
            raise DomainError(f"table_size {self.table_size} must be a power of two")
        if self.features_per_level < 1:
            raise DomainError("features_per_level must be >= 1")
        if not (1 <= self.base_resolution <= self.max_resolution):
            raise DomainError(
                f"need 1 <= base_resolution <= max_resolution, got "
                f"{self.base_resolution}..{self.max_resolution}"
            )

    @property
    def resolutions(self) -> np.ndarray:
        return level_resolutions(self.levels, self.base_resolution, self.max_resolution)

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level


@dataclass
class HashGrid:
    """Learnable feature tables, one (T, F) block per level."""

    config: HashGridConfig
    tables: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.tables is None:
            raise DomainError("use HashGrid.create() or supply tables explicitly")
        expect = (self.config.levels, self.config.table_size, self.config.features_per_level)
        if self.tables.shape != expect:
            raise DomainError(f"tables shape {self.tables.shape} != {expect}")

    @staticmethod
    def create(config: HashGridConfig, rng: np.random.Generator, dtype=np.float32) -> "HashGrid":
        tables = rng.uniform(
            -1e-4,
            1e-4,
            (config.levels, config.table_size, config.features_per_level),
        ).astype(dtype)
        return HashGrid(config=config, tables=tables)


def corner_indices(corners: np.ndarray, resolution: int, table_size: int) -> np.ndarray:
    """Table index for integer lattice corners (..., 3).

    Dense block addressing below the hash threshold, spatial hash above.
    """
    if resolution**3 <= table_size:
        s = np.int64(resolution + 1)
        c = corners.astype(np.int64)
        return (c[..., 0] + c[..., 1] * s + c[..., 2] * s * s) % table_size
    c = corners.astype(np.uint32)
    h = (c[..., 0] * HASH_P1) ^ (c[..., 1] * HASH_P2) ^ (c[..., 2] * HASH_P3)
    return (h & np.uint32(table_size - 1)).astype(np.int64)


_CORNER_OFFSETS = np.array(
    [[dx, dy, dz] for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)], dtype=np.int64
)


def encode_position(grid: HashGrid, positions: np.ndarray, with_jacobian: bool = False):
    """Encode unit-cube positions to concatenated per-level features.

    Args:
        grid: the feature tables.
        positions: (N, 3) in [0, 1]; values outside are clamped to the
            cube surface.
        with_jacobian: also return d(features)/d(position), shape
            (N, L*F, 3).  The encoding is trilinear, so this is exact
            everywhere except on cell faces (where the one-sided limits
            differ).

    Returns:
        (N, L*F) features, or (features, jacobian) when requested.

    Raises:
        DomainError: non-finite positions.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise DomainError(f"positions must be (N, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DomainError("positions must be finite")
    p = np.clip(p, 0.0, 1.0)
    cfg = grid.config
    n = p.shape[0]
    out = np.zeros((n, cfg.output_dim), dtype=np.float64)
    jac = np.zeros((n, cfg.output_dim, 3), dtype=np.float64) if with_jacobian else None
    for l, res in enumerate(cfg.resolutions):
        xs = p * res
        c0 = np.minimum(np.floor(xs), res - 1).astype(np.int64)
        c0 = np.maximum(c0, 0)
        f = xs - c0  # in [0, 1]
        table = grid.tables[l].astype(np.float64)
        cols = slice(l * cfg.features_per_level, (l + 1) * cfg.features_per_level)
        for off in _CORNER_OFFSETS:
            corner = c0 + off
            idx = corner_indices(corner, int(res), cfg.table_size)
            wx = np.where(off[0] == 1, f[:, 0], 1.0 - f[:, 0])
            wy = np.where(off[1] == 1, f[:, 1], 1.0 - f[:, 1])
            wz = np.where(off[2] == 1, f[:, 2], 1.0 - f[:, 2])
            w = wx * wy * wz
            feat = table[idx]
            out[:, cols] += w[:, None] * feat
            if with_jacobian:
                sx = np.where(off[0] == 1, 1.0, -1.0)
                sy = np.where(off[1] == 1, 1.0, -1.0)
                sz = np.where(off[2] == 1, 1.0, -1.0)
                jac[:, cols, 0] += (sx * wy * wz * res)[:, None] * feat
                jac[:, cols, 1] += (wx * sy * wz * res)[:, None] * feat
                jac[:, cols, 2] += (wx * wy * sz * res)[:, None] * feat
    if with_jacobian:
        return out, jac
    return out
