"""Panoramic scene reconstruction toolkit.

Turns posed 360-degree panoramas into explorable 3D two ways: a neural
radiance field trained from scratch on CPU, and classic PatchMatch stereo
adapted to the sphere.  Ships a synthetic oracle renderer for ground-truth
data, a checkpoint/point-cloud toolchain, and an HTTP view server.
"""

__version__ = "0.1.0"
