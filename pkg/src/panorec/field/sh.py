"""Real spherical-harmonic direction encoding, degrees 0 through 3.

16 basis values per direction, orthonormal over the unit sphere (verified
in tests by Gauss-Legendre x trapezoid quadrature, which is exact for this
polynomial degree).  Signs follow the all-positive convention; any fixed
sign choice spans the same function space for the layer that consumes it.
"""

from __future__ import annotations

import numpy as np

SH_DIM = 16

_C0 = 0.28209479177387814
_C1 = 0.48860251190291987
_C2a = 1.0925484305920792
_C2b = 0.94617469575755997
_C2c = 0.31539156525251999
_C2d = 0.54627421529603959
_C3a = 0.59004358992664352
_C3b = 2.8906114426405538
_C3c = 0.45704579946446572
_C3d = 0.37317633259011546
_C3e = 1.4453057213202769


def sh_basis(directions: np.ndarray) -> np.ndarray:
    """Evaluate the 16 basis functions for unit directions (..., 3)."""
    d = np.asarray(directions)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (SH_DIM,), dtype=d.dtype)
    out[..., 0] = _C0
    out[..., 1] = _C1 * y
    out[..., 2] = _C1 * z
    out[..., 3] = _C1 * x
    out[..., 4] = _C2a * x * y
    out[..., 5] = _C2a * y * z
    out[..., 6] = _C2b * zz - _C2c
    out[..., 7] = _C2a * x * z
    out[..., 8] = _C2d * (xx - yy)
    out[..., 9] = _C3a * y * (3.0 * xx - yy)
    out[..., 10] = _C3b * x * y * z
    out[..., 11] = _C3c * y * (5.0 * zz - 1.0)
    out[..., 12] = _C3d * z * (5.0 * zz - 3.0)
    out[..., 13] = _C3c * x * (5.0 * zz - 1.0)
    out[..., 14] = _C3e * z * (xx - yy)
    out[..., 15] = _C3a * x * (xx - 3.0 * yy)
    return out
