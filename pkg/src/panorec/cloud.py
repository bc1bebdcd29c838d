"""Colored point clouds and PLY serialization.

Writes binary little-endian PLY (vertex element: x,y,z float32, red,green,
blue uchar, optional nx,ny,nz float32).  The reader accepts both ASCII and
binary little-endian files, in any vertex property order, and skips scalar
vertex properties it does not know.  Header problems raise PlyParseError
carrying the offending 1-based line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, PlyParseError

_PLY_SCALARS = {
    "char": "i1",
    "int8": "i1",
    "uchar": "u1",
    "uint8": "u1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
}


@dataclass(frozen=True)
class PointCloud:
    """Points with per-point color and optional unit normals.

    Attributes:
        positions: (N, 3) float32 meters.
        colors: (N, 3) uint8.
        normals: (N, 3) float32, or None.
    """

    positions: np.ndarray
    colors: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float32).reshape(-1, 3))
        col = np.ascontiguousarray(np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3))
        if col.shape[0] != pos.shape[0]:
            raise DomainError(
                f"color count {col.shape[0]} does not match point count {pos.shape[0]}"
            )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        if self.normals is not None:
            nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float32).reshape(-1, 3))
            if nrm.shape[0] != pos.shape[0]:
                raise DomainError(
                    f"normal count {nrm.shape[0]} does not match point count {pos.shape[0]}"
                )
            object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3), np.float32), np.zeros((0, 3), np.uint8))


def dedup_voxel(cloud: PointCloud, voxel: float) -> PointCloud:
    """Keep at most one point per voxel-grid cell (the first in input order).

    Args:
        cloud: input points.
        voxel: cell edge length in meters, > 0.
    """
    if not voxel > 0:
        raise DomainError(f"voxel size {voxel} must be > 0")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.positions.astype(np.float64) / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    first.sort()
    return PointCloud(
        cloud.positions[first],
        cloud.colors[first],
        None if cloud.normals is None else cloud.normals[first],
    )


def write_ply(cloud: PointCloud, path) -> None:
    """Serialize as binary little-endian PLY.

    Raises:
        DomainError: non-finite positions or normals.
    """
    if not np.all(np.isfinite(cloud.positions)):
        raise DomainError("point positions must be finite")
    if cloud.normals is not None and not np.all(np.isfinite(cloud.normals)):
        raise DomainError("point normals must be finite")
    n = len(cloud)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    fields = [
        ("x", "<f4"),
        ("y", "<f4"),
        ("z", "<f4"),
        ("red", "u1"),
        ("green", "u1"),
        ("blue", "u1"),
    ]
    if cloud.normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    header.append("end_header")
    rec = np.empty(n, dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = cloud.positions.T
    rec["red"], rec["green"], rec["blue"] = cloud.colors.T
    if cloud.normals is not None:
        rec["nx"], rec["ny"], rec["nz"] = cloud.normals.T
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def _read_header(raw: bytes):
    """Parse the PLY header; returns (format, vertex_count, properties,
    body_offset, lines_consumed).

    properties is a list of (name, numpy dtype string without endianness).
    """
    end = raw.find(b"end_header")
    if end < 0:
        raise PlyParseError(1, "no end_header found")
    nl = raw.find(b"\n", end)
    if nl < 0:
        raise PlyParseError(1, "end_header line not terminated")
    header_text = raw[:nl].decode("ascii", errors="replace")
    lines = header_text.split("\n")
    if lines[0].strip() != "ply":
        raise PlyParseError(1, "missing 'ply' magic")
    fmt = None
    vertex_count = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for i, line in enumerate(lines[1:], start=2):
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise PlyParseError(i, f"unsupported format line {line!r}")
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(i, f"unsupported format {tok[1]!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyParseError(i, f"malformed element line {line!r}")
            if tok[1] == "vertex":
                try:
                    vertex_count = int(tok[2])
                except ValueError:
                    raise PlyParseError(i, f"bad vertex count {tok[2]!r}") from None
                if vertex_count < 0:
                    raise PlyParseError(i, f"negative vertex count {vertex_count}")
                in_vertex = True
            else:
                # a later element (faces etc.); its rows follow the vertex
                # block, which is all this reader consumes
                in_vertex = False
        elif tok[0] == "property":
            if not in_vertex:
                continue
            if tok[1] == "list":
                raise PlyParseError(i, "list properties on vertex are not supported")
            if len(tok) != 3:
                raise PlyParseError(i, f"malformed property line {line!r}")
            if tok[1] not in _PLY_SCALARS:
                raise PlyParseError(i, f"unknown property type {tok[1]!r}")
            props.append((tok[2], _PLY_SCALARS[tok[1]]))
        elif tok[0] == "end_header":
            break
        else:
            raise PlyParseError(i, f"unrecognized header keyword {tok[0]!r}")
    if fmt is None:
        raise PlyParseError(1, "header has no format line")
    if vertex_count is None:
        raise PlyParseError(1, "header has no vertex element")
    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise PlyParseError(1, f"vertex element lacks property {axis!r}")
    if len(set(names)) != len(names):
        raise PlyParseError(1, "duplicate vertex property names")
    return fmt, vertex_count, props, nl + 1, len(lines)


def read_ply(path) -> PointCloud:
    """Load a PLY point cloud (ASCII or binary little-endian).

    Colors default to white and normals to absent when the file lacks them.

    Raises:
        PlyParseError: malformed header or truncated body.
    """
    raw = Path(path).read_bytes()
    fmt, count, props, offset, header_lines = _read_header(raw)
    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + code) for name, code in props])
        need = count * dtype.itemsize
        body = raw[offset : offset + need]
        if len(body) < need:
            raise PlyParseError(
                header_lines, f"body truncated: need {need} bytes, have {len(body)}"
            )
        rec = np.frombuffer(body, dtype=dtype, count=count)
        columns = {name: rec[name] for name, _ in props}
    else:
        text = raw[offset:].decode("ascii", errors="replace")
        tokens = text.split()
        per_row = len(props)
        if len(tokens) < count * per_row:
            raise PlyParseError(
                header_lines,
                f"body truncated: need {count * per_row} values, have {len(tokens)}",
            )
        try:
            values = np.array(tokens[: count * per_row], dtype=np.float64)
        except ValueError as e:
            raise PlyParseError(header_lines, f"non-numeric body token: {e}") from None
        values = values.reshape(count, per_row)
        columns = {name: values[:, j] for j, (name, _) in enumerate(props)}

    positions = np.stack(
        [columns["x"], columns["y"], columns["z"]], axis=1
    ).astype(np.float32)
    if all(c in columns for c in ("red", "green", "blue")):
        colors = np.stack(
            [columns["red"], columns["green"], columns["blue"]], axis=1
        )
        colors = np.clip(np.rint(colors.astype(np.float64)), 0, 255).astype(np.uint8)
    else:
        colors = np.full((count, 3), 255, dtype=np.uint8)
    normals = None
    if all(c in columns for c in ("nx", "ny", "nz")):
        normals = np.stack(
            [columns["nx"], columns["ny"], columns["nz"]], axis=1
        ).astype(np.float32)
    return PointCloud(positions, colors, normals)
