"""The assembled radiance field: grid + network + scene geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..geometry import Aabb
from .hashgrid import HashGrid, HashGridConfig
from .kernels import encode_forward
from .network import FieldNetwork
from .sh import sh_basis

# keep encoded positions strictly inside the unit cube so the top corner
# clamp never sees exactly 1.0 in float32
_CUBE_EPS = 1e-7


@dataclass
class RadianceField:
    """A queryable scene: density and view-dependent color everywhere
    inside bounds, zero density outside.

    Attributes:
        grid: hash-grid feature tables.
        net: MLP head (owns the learnable background too).
        bounds: world-space box the field is normalized to.
        t_near: closest render distance, meters.
        t_far: farthest render distance, meters.
    """

    grid: HashGrid
    net: FieldNetwork
    bounds: Aabb
    t_near: float = 0.05
    t_far: float = 20.0

    def __post_init__(self):
        if not (self.t_far > self.t_near > 0):
            raise DomainError(f"need t_far > t_near > 0, got {self.t_near}..{self.t_far}")

    @staticmethod
    def create(
        bounds: Aabb,
        config: HashGridConfig = None,
        seed: int = 0,
        hidden: int = 64,
        t_near: float = 0.05,
        t_far: float = None,
        dtype=np.float32,
    ) -> "RadianceField":
        config = config if config is not None else HashGridConfig()
        rng = np.random.default_rng(seed)
        grid = HashGrid.create(config, rng, dtype=dtype)
        net = FieldNetwork.create(config.output_dim, rng, hidden=hidden, dtype=dtype)
        if t_far is None:
            t_far = float(bounds.diagonal)
        return RadianceField(grid=grid, net=net, bounds=bounds, t_near=t_near, t_far=t_far)

    @property
    def dtype(self):
        return self.grid.tables.dtype

    def astype(self, dtype) -> "RadianceField":
        """Copy with every parameter cast; used by the double-precision
        gradient-check path."""
        grid = HashGrid(config=self.grid.config, tables=self.grid.tables.astype(dtype))
        return RadianceField(
            grid=grid,
            net=self.net.astype(dtype),
            bounds=self.bounds,
            t_near=self.t_near,
            t_far=self.t_far,
        )

    def normalize_positions(self, points: np.ndarray):
        """World points (N, 3) -> unit-cube coordinates + in-bounds mask."""
        p = np.asarray(points, dtype=self.dtype)
        lo = self.bounds.lo.astype(self.dtype)
        size = self.bounds.size.astype(self.dtype)
        norm = (p - lo) / size
        inside = np.all((norm >= 0) & (norm <= 1), axis=-1)
        return np.clip(norm, 0.0, 1.0 - _CUBE_EPS), inside

    def encode(self, norm_positions: np.ndarray) -> np.ndarray:
        """Hash-encode already-normalized positions via the fused kernel."""
        out = np.empty(
            (norm_positions.shape[0], self.grid.config.output_dim), dtype=self.dtype
        )
        encode_forward(
            np.ascontiguousarray(norm_positions, dtype=self.dtype),
            self.grid.tables,
            self.grid.config.resolutions,
            out,
        )
        return out

    def query(self, points: np.ndarray, directions: np.ndarray):
        """Density and color at world points seen from unit directions.

        Outside bounds the density is 0 and the color is the learned
        background.  Pure: identical inputs give identical outputs.

        Args:
            points: (N, 3) world coordinates.
            directions: (N, 3) unit vectors, or (3,) broadcast to all.

        Returns:
            (sigma (N,), rgb (N, 3)).
        """
        points = np.asarray(points, dtype=self.dtype).reshape(-1, 3)
        directions = np.asarray(directions, dtype=self.dtype)
        if directions.ndim == 1:
            directions = np.broadcast_to(directions, points.shape)
        norm, inside = self.normalize_positions(points)
        feat = self.encode(norm)
        sigma, _, geo, _ = self.net.density_forward(feat)
        rgb, _ = self.net.color_forward(geo, sh_basis(directions))
        sigma = np.where(inside, sigma, 0.0).astype(self.dtype)
        rgb = np.where(inside[:, None], rgb, self.net.background).astype(self.dtype)
        return sigma, rgb
