"""Hot loops for panoramic PatchMatch, compiled with numba.

The sweep kernel is Jacobi-style: every candidate hypothesis is read
from the previous iteration's buffers and winners go into fresh ones,
so rows can run in parallel in any order with identical results.

Geometry conventions must match the equirectangular camera exactly
(integer pixel coordinates are pixel centers) and the bilinear tap must
match the numpy sampler: columns wrap, rows clamp.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange


@njit(inline="always")
def _dir_to_pixel(x, y, z, width, height):
    """Continuous pixel coordinates of a unit direction."""
    theta = math.atan2(x, z)
    s = y
    if s > 1.0:
        s = 1.0
    if s < -1.0:
        s = -1.0
    phi = math.asin(s)
    u = (theta + math.pi) / (2.0 * math.pi) * width - 0.5
    v = (0.5 - phi / math.pi) * height - 0.5
    return u, v


@njit(inline="always")
def _sample(gray, mask, u, v):
    """Bilinear tap, wrapping columns and clamping rows.

    Returns (value, ok); ok is False when any of the four source pixels
    is masked out.
    """
    h = gray.shape[0]
    w = gray.shape[1]
    if v < 0.0:
        v = 0.0
    if v > h - 1.0:
        v = h - 1.0
    uf = math.floor(u)
    fu = u - uf
    v0 = int(math.floor(v))
    if v0 > h - 1:
        v0 = h - 1
    fv = v - v0
    u0 = int(uf) % w
    u1 = (u0 + 1) % w
    v1 = v0 + 1
    if v1 > h - 1:
        v1 = h - 1
    if mask[v0, u0] == 0 or mask[v0, u1] == 0 or mask[v1, u0] == 0 or mask[v1, u1] == 0:
        return 0.0, False
    top = gray[v0, u0] * (1.0 - fu) + gray[v0, u1] * fu
    bot = gray[v1, u0] * (1.0 - fu) + gray[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv, True


@njit(inline="always")
def _hypothesis_cost(
    d,
    nx,
    ny,
    nz,
    rx,
    ry,
    rz,
    r_vecs,
    a_vals,
    a_mean,
    a_var,
    n_patch,
    view_grays,
    view_masks,
    rot,
    off,
    view_costs,
):
    """Robust multi-view normalized-correlation cost in [0, 1].

    The plane (d, n) lifts each patch direction to 3D in the reference
    camera frame; each view samples the reprojection.  A view drops out
    when any tap fails (mask, pole, plane edge-on); a view with no
    texture contributes the worst cost instead of dropping, because a
    flat patch carries no correspondence evidence.  The per-view costs
    are aggregated as the mean with the single worst view dropped when
    three or more count, which keeps a surface scoreable when one view
    is occluded; with two views both must agree, so a depth that fools
    only one of two crossing baselines still scores badly.  No views
    left means cost 1.
    """
    dn = rx * nx + ry * ny + rz * nz
    if dn > -1e-9:
        return 1.0
    planed = d * dn
    n_views = view_grays.shape[0]
    counted = 0
    for vi in range(n_views):
        vh = view_grays.shape[1]
        vw = view_grays.shape[2]
        sum_b = 0.0
        sum_bb = 0.0
        sum_ab = 0.0
        ok = True
        for s in range(n_patch):
            px = r_vecs[s, 0]
            py = r_vecs[s, 1]
            pz = r_vecs[s, 2]
            rn = px * nx + py * ny + pz * nz
            if rn > -1e-9:
                ok = False
                break
            t = planed / rn
            xx = t * px
            xy = t * py
            xz = t * pz
            yx = rot[vi, 0, 0] * xx + rot[vi, 0, 1] * xy + rot[vi, 0, 2] * xz + off[vi, 0]
            yy = rot[vi, 1, 0] * xx + rot[vi, 1, 1] * xy + rot[vi, 1, 2] * xz + off[vi, 1]
            yz = rot[vi, 2, 0] * xx + rot[vi, 2, 1] * xy + rot[vi, 2, 2] * xz + off[vi, 2]
            norm = math.sqrt(yx * yx + yy * yy + yz * yz)
            if norm < 1e-12:
                ok = False
                break
            u, v = _dir_to_pixel(yx / norm, yy / norm, yz / norm, vw, vh)
            val, good = _sample(view_grays[vi], view_masks[vi], u, v)
            if not good:
                ok = False
                break
            sum_b += val
            sum_bb += val * val
            sum_ab += a_vals[s] * val
        if not ok:
            continue
        inv_m = 1.0 / n_patch
        mean_b = sum_b * inv_m
        var_b = sum_bb * inv_m - mean_b * mean_b
        cov = sum_ab * inv_m - a_mean * mean_b
        # both floors are relative so that rescaling the images cannot
        # move a patch across them.  The reference floor vetoes patches
        # whose contrast is below quantization noise (where the computed
        # variance is cancellation error and z would be noise), and the
        # view floor additionally vetoes hypotheses whose warp collapses
        # the patch to a sub-pixel footprint, which would otherwise read
        # as a spuriously perfect correlation.  Passing both floors
        # leaves the product under the square root strictly positive.
        if a_var <= 1e-8 * a_mean * a_mean or var_b <= 1e-4 * a_var:
            c = 1.0
        else:
            z = cov / math.sqrt(a_var * var_b)
            if z > 1.0:
                z = 1.0
            if z < -1.0:
                z = -1.0
            c = 0.5 * (1.0 - z)
        # insertion keeps view_costs[:counted] sorted ascending
        pos = counted
        while pos > 0 and view_costs[pos - 1] > c:
            view_costs[pos] = view_costs[pos - 1]
            pos -= 1
        view_costs[pos] = c
        counted += 1
    if counted == 0:
        return 1.0
    keep = counted - 1 if counted >= 3 else counted
    total = 0.0
    for i in range(keep):
        total += view_costs[i]
    return total / keep


@njit(parallel=True, cache=True)
def patchmatch_sweep(
    rays,
    e1s,
    e2s,
    ref_gray,
    ref_mask,
    view_grays,
    view_masks,
    rot,
    off,
    step,
    radius,
    d_min,
    d_max,
    cur_inv,
    cur_nrm,
    cur_cost,
    nxt_inv,
    nxt_nrm,
    nxt_cost,
    jit_inv,
    jit_n,
    refine,
    jump,
):
    """One Jacobi sweep over all pixels.

    refine == 0 only scores the current hypotheses (used right after
    random init); refine == 1 additionally tests plane-transferred
    neighbors and one perturbed hypothesis, keeping the cheapest.
    Neighbors are taken at offset 1 and, when jump > 1, at offset jump
    in all four directions; long jumps early in the schedule let good
    hypotheses cross the image in a few sweeps even though each sweep
    only reads the previous iteration's buffers.
    """
    h = ref_gray.shape[0]
    w = ref_gray.shape[1]
    side = 2 * radius + 1
    n_patch = side * side
    inv_lo = 1.0 / d_max
    inv_hi = 1.0 / d_min
    d_rows = np.array((-1, 1, 0, 0), dtype=np.int64)
    d_cols = np.array((0, 0, -1, 1), dtype=np.int64)
    for row in prange(h):
        r_vecs = np.empty((n_patch, 3))
        a_vals = np.empty(n_patch)
        view_costs = np.empty(view_grays.shape[0])
        for col in range(w):
            rx = rays[row, col, 0]
            ry = rays[row, col, 1]
            rz = rays[row, col, 2]
            e1x = e1s[row, col, 0]
            e1y = e1s[row, col, 1]
            e1z = e1s[row, col, 2]
            e2x = e2s[row, col, 0]
            e2y = e2s[row, col, 1]
            e2z = e2s[row, col, 2]

            a_ok = True
            sum_a = 0.0
            sum_aa = 0.0
            s = 0
            for i in range(-radius, radius + 1):
                for j in range(-radius, radius + 1):
                    px = rx + step * (i * e1x + j * e2x)
                    py = ry + step * (i * e1y + j * e2y)
                    pz = rz + step * (i * e1z + j * e2z)
                    norm = math.sqrt(px * px + py * py + pz * pz)
                    px /= norm
                    py /= norm
                    pz /= norm
                    r_vecs[s, 0] = px
                    r_vecs[s, 1] = py
                    r_vecs[s, 2] = pz
                    if a_ok:
                        u, v = _dir_to_pixel(px, py, pz, w, h)
                        val, good = _sample(ref_gray, ref_mask, u, v)
                        if good:
                            a_vals[s] = val
                            sum_a += val
                            sum_aa += val * val
                        else:
                            a_ok = False
                    s += 1
            if not a_ok:
                nxt_inv[row, col] = cur_inv[row, col]
                nxt_nrm[row, col, 0] = cur_nrm[row, col, 0]
                nxt_nrm[row, col, 1] = cur_nrm[row, col, 1]
                nxt_nrm[row, col, 2] = cur_nrm[row, col, 2]
                nxt_cost[row, col] = 1.0
                continue
            inv_m = 1.0 / n_patch
            a_mean = sum_a * inv_m
            a_var = sum_aa * inv_m - a_mean * a_mean

            best_inv = cur_inv[row, col]
            bnx = cur_nrm[row, col, 0]
            bny = cur_nrm[row, col, 1]
            bnz = cur_nrm[row, col, 2]
            if refine == 0:
                best_cost = _hypothesis_cost(
                    1.0 / best_inv, bnx, bny, bnz, rx, ry, rz, r_vecs, a_vals,
                    a_mean, a_var, n_patch, view_grays, view_masks, rot, off, view_costs,
                )
            else:
                best_cost = cur_cost[row, col]
                for nb in range(8):
                    scale = 1 if nb < 4 else jump
                    if nb >= 4 and jump <= 1:
                        break
                    nr = row + d_rows[nb % 4] * scale
                    nc = (col + d_cols[nb % 4] * scale) % w
                    if nr < 0 or nr >= h:
                        continue
                    nnx = cur_nrm[nr, nc, 0]
                    nny = cur_nrm[nr, nc, 1]
                    nnz = cur_nrm[nr, nc, 2]
                    den = rx * nnx + ry * nny + rz * nnz
                    if den > -1e-9:
                        continue
                    # neighbor's plane crossed with this pixel's ray
                    nrx = rays[nr, nc, 0]
                    nry = rays[nr, nc, 1]
                    nrz = rays[nr, nc, 2]
                    num = (nrx * nnx + nry * nny + nrz * nnz) / cur_inv[nr, nc]
                    d_new = num / den
                    if d_new < d_min or d_new > d_max:
                        continue
                    c = _hypothesis_cost(
                        d_new, nnx, nny, nnz, rx, ry, rz, r_vecs, a_vals,
                        a_mean, a_var, n_patch, view_grays, view_masks, rot, off, view_costs,
                    )
                    if c < best_cost:
                        best_cost = c
                        best_inv = 1.0 / d_new
                        bnx = nnx
                        bny = nny
                        bnz = nnz
                # one perturbed hypothesis around the running best
                p_inv = best_inv + jit_inv[row, col]
                if p_inv < inv_lo:
                    p_inv = inv_lo
                if p_inv > inv_hi:
                    p_inv = inv_hi
                pnx = bnx + jit_n[row, col, 0]
                pny = bny + jit_n[row, col, 1]
                pnz = bnz + jit_n[row, col, 2]
                norm = math.sqrt(pnx * pnx + pny * pny + pnz * pnz)
                if norm > 1e-9:
                    pnx /= norm
                    pny /= norm
                    pnz /= norm
                    c = _hypothesis_cost(
                        1.0 / p_inv, pnx, pny, pnz, rx, ry, rz, r_vecs, a_vals,
                        a_mean, a_var, n_patch, view_grays, view_masks, rot, off, view_costs,
                    )
                    if c < best_cost:
                        best_cost = c
                        best_inv = p_inv
                        bnx = pnx
                        bny = pny
                        bnz = pnz
            nxt_inv[row, col] = best_inv
            nxt_nrm[row, col, 0] = bnx
            nxt_nrm[row, col, 1] = bny
            nxt_nrm[row, col, 2] = bnz
            nxt_cost[row, col] = best_cost
