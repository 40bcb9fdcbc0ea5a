"""VAF1 binary field files.

Layout: b"VAF1", u32 dim, u32 sizes[dim], f64 box[dim], u32 n_comp,
then the components row-major as little-endian f64.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField, VectorField

MAGIC = b"VAF1"


class VafError(ValueError):
    pass


def encode(f) -> bytes:
    g = f.grid
    data = f.samples[None] if isinstance(f, ScalarField) else f.components
    head = MAGIC + struct.pack("<I", g.dim)
    head += struct.pack(f"<{g.dim}I", *g.sizes)
    head += struct.pack(f"<{g.dim}d", *g.box)
    head += struct.pack("<I", data.shape[0])
    return head + np.ascontiguousarray(data, dtype="<f8").tobytes()


def decode(buf: bytes):
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise VafError("bad magic: not a VAF1 file")
    (dim,) = struct.unpack_from("<I", buf, 4)
    if dim not in (2, 3):
        raise VafError(f"unsupported dim {dim}")
    off = 8
    need = off + 4 * dim + 8 * dim + 4
    if len(buf) < need:
        raise VafError("truncated header")
    sizes = struct.unpack_from(f"<{dim}I", buf, off)
    off += 4 * dim
    box = struct.unpack_from(f"<{dim}d", buf, off)
    off += 8 * dim
    (n_comp,) = struct.unpack_from("<I", buf, off)
    off += 4
    count = n_comp * int(np.prod(sizes))
    if len(buf) != off + 8 * count:
        raise VafError(f"payload has {len(buf) - off} bytes, expected {8 * count}")
    try:
        grid = Grid(dim, sizes, box)
    except ValueError as exc:
        raise VafError(str(exc)) from exc
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape((n_comp,) + tuple(sizes))
    if n_comp == 1:
        return ScalarField(grid, data[0])
    if n_comp == dim:
        return VectorField(grid, data)
    raise VafError(f"component count {n_comp} does not match dim {dim}")


def write(path, f) -> None:
    Path(path).write_bytes(encode(f))


def read(path):
    return decode(Path(path).read_bytes())
