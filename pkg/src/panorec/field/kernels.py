"""Fused hot loops for the hash encoding, compiled with numba.

All three kernels parallelize over LEVELS with a sequential sample loop
inside.  For the forward pass that keeps one feature table at a time in
cache; for the backward pass and the optimizer step it means each thread
owns one level's table outright, so accumulation order is fixed
regardless of thread count.  That choice is what makes training bitwise
reproducible.

Both kernels must produce the same numbers as the reference
implementation in hashgrid.py (same corner weights, same index rules).
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_P1 = np.uint32(1)
_P2 = np.uint32(2654435761)
_P3 = np.uint32(805459861)


@njit(inline="always")
def _corner_index(cx, cy, cz, res, table_size):
    if res * res * res <= table_size:
        s = res + 1
        return (cx + cy * s + cz * s * s) % table_size
    h = (np.uint32(cx) * _P1) ^ (np.uint32(cy) * _P2) ^ (np.uint32(cz) * _P3)
    return np.int64(h & np.uint32(table_size - 1))


@njit(parallel=True, fastmath=True, cache=True)
def encode_forward(pos, tables, resolutions, out):
    """Trilinear hash-grid lookup.

    Args:
        pos: (N, 3) positions already clipped to [0, 1].
        tables: (L, T, F) feature tables.
        resolutions: (L,) int64 lattice sizes.
        out: (N, L*F) output, overwritten.
    """
    n = pos.shape[0]
    n_levels = tables.shape[0]
    table_size = tables.shape[1]
    n_feat = tables.shape[2]
    # level-major: one table stays cache-resident per inner loop, and
    # levels write disjoint output columns so the order is race-free
    for l in prange(n_levels):
        res = resolutions[l]
        base = l * n_feat
        for i in range(n):
            x = pos[i, 0] * res
            y = pos[i, 1] * res
            z = pos[i, 2] * res
            cx = min(np.int64(x), res - 1)
            cy = min(np.int64(y), res - 1)
            cz = min(np.int64(z), res - 1)
            fx = x - cx
            fy = y - cy
            fz = z - cz
            for f in range(n_feat):
                out[i, base + f] = 0.0
            for k in range(8):
                dx = k & 1
                dy = (k >> 1) & 1
                dz = (k >> 2) & 1
                wx = fx if dx == 1 else 1.0 - fx
                wy = fy if dy == 1 else 1.0 - fy
                wz = fz if dz == 1 else 1.0 - fz
                w = wx * wy * wz
                idx = _corner_index(cx + dx, cy + dy, cz + dz, res, table_size)
                for f in range(n_feat):
                    out[i, base + f] += w * tables[l, idx, f]


@njit(parallel=True, fastmath=True, cache=True)
def encode_backward(pos, grad_out, resolutions, grad_tables, touched):
    """Scatter feature gradients back into the tables.

    Args:
        pos: (N, 3) the same clipped positions the forward pass saw.
        grad_out: (N, L*F) upstream gradient.
        resolutions: (L,) int64.
        grad_tables: (L, T, F) accumulator, caller-zeroed.
        touched: (L, T) uint8, set to 1 for every row receiving gradient.
    """
    n = pos.shape[0]
    n_levels = grad_tables.shape[0]
    table_size = grad_tables.shape[1]
    n_feat = grad_tables.shape[2]
    for l in prange(n_levels):
        res = resolutions[l]
        base = l * n_feat
        for i in range(n):
            x = pos[i, 0] * res
            y = pos[i, 1] * res
            z = pos[i, 2] * res
            cx = min(np.int64(x), res - 1)
            cy = min(np.int64(y), res - 1)
            cz = min(np.int64(z), res - 1)
            fx = x - cx
            fy = y - cy
            fz = z - cz
            for k in range(8):
                dx = k & 1
                dy = (k >> 1) & 1
                dz = (k >> 2) & 1
                wx = fx if dx == 1 else 1.0 - fx
                wy = fy if dy == 1 else 1.0 - fy
                wz = fz if dz == 1 else 1.0 - fz
                w = wx * wy * wz
                idx = _corner_index(cx + dx, cy + dy, cz + dz, res, table_size)
                touched[l, idx] = 1
                for f in range(n_feat):
                    grad_tables[l, idx, f] += w * grad_out[i, base + f]


@njit(parallel=True, fastmath=True, cache=True)
def adam_sparse_step(tables, grads, m, v, touched, scale, beta1, beta2, eps):
    """Adaptive-moment update applied only to touched table rows.

    Parallel over levels (each thread owns whole tables), so the result
    is independent of thread count.

    Args:
        tables: (L, T, F) parameters, updated in place.
        grads: (L, T, F) batch gradient.
        m, v: (L, T, F) moment accumulators, updated in place.
        touched: (L, T) uint8 row mask from encode_backward.
        scale: learning rate times the step's bias-correction factor.
        beta1, beta2, eps: moment decay rates and denominator floor.
    """
    n_levels = tables.shape[0]
    table_size = tables.shape[1]
    n_feat = tables.shape[2]
    for l in prange(n_levels):
        for r in range(table_size):
            if touched[l, r] == 0:
                continue
            for f in range(n_feat):
                g = grads[l, r, f]
                mv = beta1 * m[l, r, f] + (1.0 - beta1) * g
                vv = beta2 * v[l, r, f] + (1.0 - beta2) * g * g
                m[l, r, f] = mv
                v[l, r, f] = vv
                tables[l, r, f] -= scale * mv / (np.sqrt(vv) + eps)
