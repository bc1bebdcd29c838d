"""Binary checkpoint format for radiance fields.

Layout, all little-endian:

    bytes 0..3   magic "PNRF"
    bytes 4..7   format version, u32 (currently 1)
    bytes 8..11  config length n, u32
    n bytes      UTF-8 JSON: grid shape, hidden width, bounds, t range
    rest         float32 parameter arrays: grid tables level-major,
                 then network arrays layer-major (w1 b1 w2 b2 w3 b3
                 w4 b4 bg_logit)

The loader rejects any version it does not write, and any file whose
payload size disagrees with its own config.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import DomainError
from ..geometry import Aabb
from .hashgrid import HashGrid, HashGridConfig
from .model import RadianceField
from .network import DENSITY_OUT, GEO_DIM, FieldNetwork
from .sh import SH_DIM

MAGIC = b"PNRF"
VERSION = 1

_CONFIG_KEYS = {
    "levels",
    "table_size",
    "features_per_level",
    "base_resolution",
    "max_resolution",
    "hidden",
    "bounds_lo",
    "bounds_hi",
    "t_near",
    "t_far",
}


def _net_shapes(in_dim: int, hidden: int):
    return [
        ("w1", (in_dim, hidden)),
        ("b1", (hidden,)),
        ("w2", (hidden, DENSITY_OUT)),
        ("b2", (DENSITY_OUT,)),
        ("w3", (GEO_DIM + SH_DIM, hidden)),
        ("b3", (hidden,)),
        ("w4", (hidden, 3)),
        ("b4", (3,)),
        ("bg_logit", (3,)),
    ]


def save_checkpoint(field: RadianceField, path) -> None:
    """Write a field to disk; parameters are stored as float32."""
    cfg = field.grid.config
    hidden = field.net.b1.shape[0]
    header = {
        "levels": cfg.levels,
        "table_size": cfg.table_size,
        "features_per_level": cfg.features_per_level,
        "base_resolution": cfg.base_resolution,
        "max_resolution": cfg.max_resolution,
        "hidden": hidden,
        "bounds_lo": [float(x) for x in field.bounds.lo],
        "bounds_hi": [float(x) for x in field.bounds.hi],
        "t_near": field.t_near,
        "t_far": field.t_far,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(VERSION).tobytes())
        f.write(np.uint32(len(blob)).tobytes())
        f.write(blob)
        f.write(np.ascontiguousarray(field.grid.tables, dtype="<f4").tobytes())
        for _, arr in field.net.param_items():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> RadianceField:
    """Read a field written by save_checkpoint.

    Raises:
        DomainError: wrong magic, unsupported version, malformed config,
            or payload size mismatch.
        OSError: unreadable file.
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise DomainError(f"not a field checkpoint (magic {data[:4]!r})")
    if len(data) < 12:
        raise DomainError("checkpoint truncated before header")
    version = int(np.frombuffer(data, "<u4", 1, offset=4)[0])
    if version != VERSION:
        raise DomainError(f"checkpoint version {version} unsupported (expected {VERSION})")
    blob_len = int(np.frombuffer(data, "<u4", 1, offset=8)[0])
    if len(data) < 12 + blob_len:
        raise DomainError("checkpoint truncated inside config block")
    try:
        header = json.loads(data[12 : 12 + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DomainError(f"checkpoint config block is not valid JSON: {e}") from None
    if not isinstance(header, dict) or set(header) != _CONFIG_KEYS:
        raise DomainError("checkpoint config block has missing or unknown keys")

    cfg = HashGridConfig(
        levels=int(header["levels"]),
        table_size=int(header["table_size"]),
        features_per_level=int(header["features_per_level"]),
        base_resolution=int(header["base_resolution"]),
        max_resolution=int(header["max_resolution"]),
    )
    hidden = int(header["hidden"])
    bounds = Aabb(np.array(header["bounds_lo"], dtype=np.float64), np.array(header["bounds_hi"], dtype=np.float64))

    offset = 12 + blob_len
    table_count = cfg.levels * cfg.table_size * cfg.features_per_level
    shapes = _net_shapes(cfg.output_dim, hidden)
    expected = table_count + sum(int(np.prod(s)) for _, s in shapes)
    payload = np.frombuffer(data, "<f4", offset=offset)
    if payload.size != expected:
        raise DomainError(
            f"checkpoint payload holds {payload.size} floats, config implies {expected}"
        )

    tables = (
        payload[:table_count]
        .reshape(cfg.levels, cfg.table_size, cfg.features_per_level)
        .copy()
    )
    pos = table_count
    arrays = {}
    for name, shape in shapes:
        n = int(np.prod(shape))
        arrays[name] = payload[pos : pos + n].reshape(shape).copy()
        pos += n
    return RadianceField(
        grid=HashGrid(config=cfg, tables=tables),
        net=FieldNetwork(**arrays),
        bounds=bounds,
        t_near=float(header["t_near"]),
        t_far=float(header["t_far"]),
    )
