"""The field's fully-connected head, with hand-written backpropagation.

Two branches.  Density: encoded position (L*F values) -> hidden -> 1 raw
density + 15 geometry features.  Color: geometry features concatenated
with the 16-value direction encoding -> hidden -> RGB.  Density activation
is softplus (bounded gradient, no early-training blowup); color is
logistic.  A learnable background color (stored as logits) rides along
with the network parameters.

Everything is plain numpy so the matmuls hit BLAS; dtype follows the
parameter arrays (float32 for training, float64 for gradient checking).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import DomainError
from .sh import SH_DIM

GEO_DIM = 15
DENSITY_OUT = 1 + GEO_DIM


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(np.zeros((), dtype=x.dtype), x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class FieldNetwork:
    """Parameter arrays; treat as a value owned by one trainer at a time."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray
    bg_logit: np.ndarray

    @staticmethod
    def create(
        in_dim: int, rng: np.random.Generator, hidden: int = 64, dtype=np.float32
    ) -> "FieldNetwork":
        """He-initialize the rectified layers, Xavier the linear outputs,
        zero every bias (so a fresh field has raw density exactly 0 where
        the encoded features vanish: sigma = softplus(0) = ln 2)."""
        if hidden < 1:
            raise DomainError("hidden width must be >= 1")

        def he(fan_in, fan_out):
            return (rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)).astype(dtype)

        def xavier(fan_in, fan_out):
            return (rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)).astype(dtype)

        return FieldNetwork(
            w1=he(in_dim, hidden),
            b1=np.zeros(hidden, dtype=dtype),
            w2=xavier(hidden, DENSITY_OUT),
            b2=np.zeros(DENSITY_OUT, dtype=dtype),
            w3=he(GEO_DIM + SH_DIM, hidden),
            b3=np.zeros(hidden, dtype=dtype),
            w4=xavier(hidden, 3),
            b4=np.zeros(3, dtype=dtype),
            bg_logit=np.zeros(3, dtype=dtype),
        )

    @property
    def dtype(self):
        return self.w1.dtype

    @property
    def background(self) -> np.ndarray:
        """Learned background RGB in (0, 1)."""
        return sigmoid(self.bg_logit)

    def param_items(self):
        """(name, array) pairs in checkpoint order."""
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def astype(self, dtype) -> "FieldNetwork":
        return FieldNetwork(**{name: arr.astype(dtype) for name, arr in self.param_items()})

    # -- density branch ----------------------------------------------------

    def density_forward(self, feat: np.ndarray):
        """feat (N, L*F) -> (sigma (N,), raw (N,), geo (N, 15), h1 cache)."""
        h1 = np.maximum(feat @ self.w1 + self.b1, 0)
        out1 = h1 @ self.w2 + self.b2
        raw = out1[:, 0]
        geo = out1[:, 1:]
        return softplus(raw), raw, geo, h1

    def density_backward(self, feat, h1, draw, dgeo):
        """Gradients of the density branch.

        Args:
            feat, h1: forward caches.
            draw: (N,) gradient on the raw (pre-softplus) density.
            dgeo: (N, 15) gradient on geometry features, or None.

        Returns:
            (dfeat, grads dict with dw1, db1, dw2, db2).
        """
        dout1 = np.zeros((feat.shape[0], DENSITY_OUT), dtype=feat.dtype)
        dout1[:, 0] = draw
        if dgeo is not None:
            dout1[:, 1:] = dgeo
        dw2 = h1.T @ dout1
        db2 = dout1.sum(axis=0)
        dh1 = dout1 @ self.w2.T
        dh1[h1 <= 0] = 0
        dw1 = feat.T @ dh1
        db1 = dh1.sum(axis=0)
        dfeat = dh1 @ self.w1.T
        return dfeat, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}

    # -- color branch ------------------------------------------------------

    def color_forward(self, geo: np.ndarray, sh: np.ndarray):
        """(geo (N,15), sh (N,16)) -> (rgb (N,3), caches (cin, h2, logits))."""
        cin = np.concatenate([geo, sh], axis=1)
        h2 = np.maximum(cin @ self.w3 + self.b3, 0)
        logits = h2 @ self.w4 + self.b4
        return sigmoid(logits), (cin, h2, logits)

    def color_backward(self, cache, drgb, rgb):
        """Gradients of the color branch.

        Args:
            cache: (cin, h2, logits) from color_forward.
            drgb: (N, 3) gradient on the post-sigmoid color.
            rgb: (N, 3) the forward output.

        Returns:
            (dgeo, grads dict with dw3, db3, dw4, db4).
        """
        cin, h2, _ = cache
        dlogits = drgb * rgb * (1.0 - rgb)
        dw4 = h2.T @ dlogits
        db4 = dlogits.sum(axis=0)
        dh2 = dlogits @ self.w4.T
        dh2[h2 <= 0] = 0
        dw3 = cin.T @ dh2
        db3 = dh2.sum(axis=0)
        dcin = dh2 @ self.w3.T
        return dcin[:, :GEO_DIM], {"w3": dw3, "b3": db3, "w4": dw4, "b4": db4}
