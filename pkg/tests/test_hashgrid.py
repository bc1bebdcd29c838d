"""Hash-grid encoding tests: reference implementation, analytic gradients,
and agreement between the reference and the compiled kernels."""

import numpy as np
import pytest

from panorec.errors import DomainError
from panorec.field.hashgrid import (
    HashGrid,
    HashGridConfig,
    corner_indices,
    encode_position,
    level_resolutions,
)
from panorec.field.kernels import encode_backward, encode_forward

SMALL = HashGridConfig(
    levels=2, table_size=64, features_per_level=2, base_resolution=4, max_resolution=8
)


def small_grid(seed=0, dtype=np.float64, scale=1.0):
    rng = np.random.default_rng(seed)
    g = HashGrid.create(SMALL, rng, dtype=dtype)
    g.tables = (rng.standard_normal(g.tables.shape) * scale).astype(dtype)
    return g


class TestConfig:
    def test_default_resolutions(self):
        # [TRIVIAL] geometric schedule pinned by its endpoints
        res = HashGridConfig().resolutions
        assert res[0] == 16
        assert res[-1] == 2048
        assert len(res) == 16
        assert np.all(np.diff(res) >= 0)

    def test_growth_factor(self):
        # [DERIVED] b = exp((ln 2048 - ln 16)/15); level 5 floor value
        b = np.exp((np.log(2048) - np.log(16)) / 15)
        res = level_resolutions(16, 16, 2048)
        assert res[5] == int(np.floor(16 * b**5 + 1e-6))

    def test_single_level(self):
        assert level_resolutions(1, 16, 2048).tolist() == [16]

    def test_bad_table_size(self):
        with pytest.raises(DomainError):
            HashGridConfig(table_size=100)

    def test_bad_levels(self):
        with pytest.raises(DomainError):
            HashGridConfig(levels=0)

    def test_init_range(self):
        g = HashGrid.create(HashGridConfig(levels=2, table_size=256), np.random.default_rng(0))
        assert np.all(np.abs(g.tables) <= 1e-4)
        assert g.tables.dtype == np.float32


class TestCornerIndices:
    def test_hash_constants(self):
        # [TRIVIAL] direct evaluation of the pinned hash at a known corner:
        # (1,1,1) -> 1 XOR 2654435761 XOR 805459861 (uint32), masked
        corners = np.array([[1, 1, 1]])
        t = 2**19
        got = corner_indices(corners, resolution=4096, table_size=t)
        expect = (np.uint32(1) ^ np.uint32(2654435761) ^ np.uint32(805459861)) & np.uint32(t - 1)
        assert got[0] == int(expect)

    def test_dense_layout(self):
        # [TRIVIAL] dense indexing is x + y*s + z*s^2 with s = res + 1
        corners = np.array([[2, 3, 1]])
        got = corner_indices(corners, resolution=4, table_size=1024)
        assert got[0] == 2 + 3 * 5 + 1 * 25

    def test_dense_wraps_into_table(self):
        corners = np.array([[8, 8, 8]])
        got = corner_indices(corners, resolution=8, table_size=512)
        assert 0 <= got[0] < 512


class TestEncode:
    def test_corner_collapse(self):
        # [TRIVIAL] p on a lattice corner of every level: weights collapse
        # onto a single table row per level
        g = small_grid()
        out = encode_position(g, np.zeros((1, 3)))
        expect = np.concatenate([g.tables[0, 0], g.tables[1, 0]])
        np.testing.assert_allclose(out[0], expect, rtol=1e-12)

    def test_corner_collapse_interior(self):
        # single-level grid, interior corner (2,1,3) of an 8^3 lattice
        cfg = HashGridConfig(
            levels=1, table_size=1024, features_per_level=2, base_resolution=8, max_resolution=8
        )
        g = HashGrid(cfg, np.random.default_rng(1).standard_normal((1, 1024, 2)))
        p = np.array([[2 / 8, 1 / 8, 3 / 8]])
        out = encode_position(g, p)
        idx = corner_indices(np.array([[2, 1, 3]]), 8, 1024)[0]
        np.testing.assert_allclose(out[0], g.tables[0, idx], rtol=1e-9)

    def test_partition_of_unity(self):
        # [TRIVIAL] all-ones tables: any interpolation must return exactly 1
        g = small_grid()
        g.tables = np.ones_like(g.tables)
        p = np.random.default_rng(2).random((200, 3))
        out = encode_position(g, p)
        np.testing.assert_allclose(out, 1.0, atol=1e-12)

    def test_finite_difference_jacobian(self):
        # [DERIVED] FD oracle; points kept >= 0.15 cells away from every
        # cell face at both levels so the probe never crosses a crease
        g = small_grid(seed=3)
        rng = np.random.default_rng(4)
        k = rng.integers(0, 8, (40, 3))
        u = rng.uniform(0.3, 0.7, (40, 3))
        p = (k + u) / 8.0
        _, jac = encode_position(g, p, with_jacobian=True)
        h = 1e-5
        for axis in range(3):
            dp = np.zeros(3)
            dp[axis] = h
            fd = (encode_position(g, p + dp) - encode_position(g, p - dp)) / (2 * h)
            denom = np.maximum(np.abs(fd), 1e-6)
            rel = np.abs(jac[:, :, axis] - fd) / denom
            assert rel.max() <= 1e-4

    def test_lipschitz_continuity(self):
        # trilinear interpolation is globally Lipschitz with constant
        # sum_l 2*sqrt(3)*N_l*max|table_l|
        g = small_grid(seed=5)
        res = SMALL.resolutions
        k = sum(
            2 * np.sqrt(3) * int(r) * np.abs(g.tables[l]).max() for l, r in enumerate(res)
        )
        rng = np.random.default_rng(6)
        p = rng.random((300, 3)) * 0.99
        eps = rng.uniform(-1, 1, (300, 3)) * 1e-3
        q = np.clip(p + eps, 0, 1)
        d_feat = np.abs(encode_position(g, q) - encode_position(g, p)).max(axis=1)
        d_pos = np.linalg.norm(q - p, axis=1)
        assert np.all(d_feat <= k * d_pos + 1e-12)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            encode_position(small_grid(), np.array([[0.1, np.nan, 0.2]]))


class TestKernels:
    def test_forward_matches_reference(self):
        g = small_grid(seed=7)
        p = np.random.default_rng(8).random((500, 3))
        ref = encode_position(g, p)
        out = np.zeros((500, SMALL.output_dim), dtype=np.float64)
        encode_forward(p, g.tables, SMALL.resolutions, out)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)

    def test_forward_matches_reference_float32(self):
        g = small_grid(seed=9, dtype=np.float32)
        p = np.random.default_rng(10).random((200, 3)).astype(np.float32)
        ref = encode_position(g, p.astype(np.float64))
        out = np.zeros((200, SMALL.output_dim), dtype=np.float32)
        encode_forward(p, g.tables, SMALL.resolutions, out)
        np.testing.assert_allclose(out, ref, rtol=2e-5, atol=2e-5)

    def test_forward_hash_level(self):
        # force a hashed (non-dense) level: resolution^3 > table_size
        cfg = HashGridConfig(
            levels=1, table_size=32, features_per_level=1, base_resolution=16, max_resolution=16
        )
        g = HashGrid(cfg, np.random.default_rng(11).standard_normal((1, 32, 1)))
        p = np.random.default_rng(12).random((100, 3))
        ref = encode_position(g, p)
        out = np.zeros((100, 1), dtype=np.float64)
        encode_forward(p, g.tables, cfg.resolutions, out)
        np.testing.assert_allclose(out, ref, rtol=1e-12)

    def test_backward_matches_manual_scatter(self):
        g = small_grid(seed=13)
        rng = np.random.default_rng(14)
        n = 300
        p = rng.random((n, 3))
        grad_out = rng.standard_normal((n, SMALL.output_dim))

        grad_tables = np.zeros_like(g.tables)
        touched = np.zeros(g.tables.shape[:2], dtype=np.uint8)
        encode_backward(p, grad_out, SMALL.resolutions, grad_tables, touched)

        # reference scatter via the numpy encoding pieces
        expect = np.zeros_like(g.tables)
        for l, res in enumerate(SMALL.resolutions):
            xs = p * res
            c0 = np.maximum(np.minimum(np.floor(xs), res - 1), 0).astype(np.int64)
            f = xs - c0
            for k in range(8):
                off = np.array([k & 1, (k >> 1) & 1, (k >> 2) & 1])
                idx = corner_indices(c0 + off, int(res), SMALL.table_size)
                w = np.prod(np.where(off == 1, f, 1 - f), axis=1)
                for feat in range(SMALL.features_per_level):
                    np.add.at(
                        expect[l, :, feat],
                        idx,
                        w * grad_out[:, l * SMALL.features_per_level + feat],
                    )
        np.testing.assert_allclose(grad_tables, expect, atol=1e-10)
        # every row receiving weight is marked
        assert np.all((np.abs(expect).sum(axis=2) > 0) <= (touched > 0))

    def test_backward_finite_difference(self):
        # [DERIVED] FD through the forward kernel wrt one table entry
        g = small_grid(seed=15)
        p = np.random.default_rng(16).random((50, 3))
        grad_out = np.ones((50, SMALL.output_dim))
        grad_tables = np.zeros_like(g.tables)
        touched = np.zeros(g.tables.shape[:2], dtype=np.uint8)
        encode_backward(p, grad_out, SMALL.resolutions, grad_tables, touched)
        h = 1e-6
        for l, t_idx, f_idx in [(0, 5, 0), (1, 20, 1), (0, 63, 1)]:
            loss = []
            for sign in (+1, -1):
                g2 = small_grid(seed=15)
                g2.tables[l, t_idx, f_idx] += sign * h
                loss.append(float(encode_position(g2, p).sum()))
            fd = (loss[0] - loss[1]) / (2 * h)
            assert grad_tables[l, t_idx, f_idx] == pytest.approx(fd, abs=1e-6, rel=1e-6)
