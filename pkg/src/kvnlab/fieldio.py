"""Binary dump of N-dimensional sampled fields.

Layout (little-endian)::

    b"KVNFLD01"
    uint32 rank, uint32 dtype code (0 = float64, 1 = complex128)
    rank x { uint16 name length, name (utf-8), uint64 count, float64 min, float64 max }
    payload, row-major

Writes go to a temporary file in the target directory and are renamed into
place, so readers never see a partial file.
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import CorruptHeader

MAGIC = b"KVNFLD01"
DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


@dataclass
class Axis:
    name: str
    count: int
    lo: float
    hi: float


@dataclass(eq=False)
class Field:
    values: np.ndarray
    axes: list[Axis]

    def __post_init__(self):
        shape = tuple(a.count for a in self.axes)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")


def _code(values: np.ndarray) -> int:
    if np.iscomplexobj(values):
        return 1
    if np.issubdtype(values.dtype, np.number):
        return 0
    raise TypeError(f"unsupported dtype {values.dtype}")


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_field(field: Field) -> bytes:
    code = _code(field.values)
    parts = [MAGIC, struct.pack("<II", field.values.ndim, code)]
    for ax in field.axes:
        name = ax.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)) + name + struct.pack("<Qdd", ax.count, ax.lo, ax.hi))
    parts.append(np.ascontiguousarray(field.values, dtype=DTYPES[code]).tobytes())
    return b"".join(parts)


def write_field(path, field: Field) -> None:
    atomic_write_bytes(path, encode_field(field))


def decode_field(data: bytes) -> Field:
    def take(fmt, offset):
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise CorruptHeader("file ends inside the header")
        return struct.unpack_from(fmt, data, offset), offset + size

    if data[:8] != MAGIC:
        raise CorruptHeader("bad magic tag")
    (rank, code), off = take("<II", 8)
    if code not in DTYPES:
        raise CorruptHeader(f"unknown dtype code {code}")
    if rank > 16:
        raise CorruptHeader(f"implausible rank {rank}")
    axes = []
    for _ in range(rank):
        (n,), off = take("<H", off)
        if off + n > len(data):
            raise CorruptHeader("file ends inside an axis name")
        name = data[off:off + n].decode("utf-8", errors="strict")
        off += n
        (count, lo, hi), off = take("<Qdd", off)
        axes.append(Axis(name, int(count), float(lo), float(hi)))
    dtype = DTYPES[code]
    expected = int(np.prod([a.count for a in axes], dtype=np.int64)) * dtype.itemsize
    if len(data) - off != expected:
        raise CorruptHeader(f"payload has {len(data) - off} bytes, header implies {expected}")
    values = np.frombuffer(data, dtype=dtype, offset=off).reshape([a.count for a in axes]).copy()
    return Field(values, axes)


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return decode_field(fh.read())


def grid_axes(grid) -> list[Axis]:
    """Axes for a 2D ``(q, p)`` field on ``grid`` (max is the last sample)."""
    return [Axis("q", grid.n_q, float(grid.q[0]), float(grid.q[-1])),
            Axis("p", grid.n_p, float(grid.p[0]), float(grid.p[-1]))]


def wigner_axes(W) -> list[Axis]:
    names = W.axis_names()
    return [Axis(n, len(x), float(x[0]), float(x[-1])) for n, (x, _) in zip(names, W.axis_ranges())]
