"""Self-describing binary snapshots of grid wavefunctions.

Layout (all little-endian)::

    b"BMDL"  uint32 version  uint32 ndim  uint32 levels
    uint32 n[ndim]  float64 spacing[ndim]  float64 lower[ndim]
    float64 mu  float64 t
    complex64 payload, C order over (grid..., level), real/imag interleaved
"""

import struct

import numpy as np

from ..errors import InvalidInputError
from .grid import Grid, GridWavefunction

MAGIC = b"BMDL"
VERSION = 1
# complex64 storage loses precision, so reloaded norms are checked loosely
LOAD_NORM_TOL = 1e-5


def encode_snapshot(psi: GridWavefunction) -> bytes:
    g = psi.grid
    head = MAGIC + struct.pack("<3I", VERSION, g.dim, psi.levels)
    head += struct.pack(f"<{g.dim}I", *g.shape)
    head += struct.pack(f"<{2 * g.dim}d", *g.spacing, *g.lower)
    head += struct.pack("<2d", psi.mu, psi.t)
    return head + psi.as_complex128().astype("<c8").tobytes(order="C")


def decode_snapshot(data: bytes, metric=None) -> GridWavefunction:
    if len(data) < 16 or data[:4] != MAGIC:
        raise InvalidInputError("not a snapshot file (bad magic)")
    version, ndim, levels = struct.unpack_from("<3I", data, 4)
    if version != VERSION:
        raise InvalidInputError(f"unsupported snapshot version {version}")
    off = 16
    if len(data) < off + 20 * ndim + 16:
        raise InvalidInputError("snapshot header is truncated")
    shape = struct.unpack_from(f"<{ndim}I", data, off)
    off += 4 * ndim
    vals = struct.unpack_from(f"<{2 * ndim}d", data, off)
    off += 16 * ndim
    mu, t = struct.unpack_from("<2d", data, off)
    off += 16
    spacing, lower = np.array(vals[:ndim]), np.array(vals[ndim:])
    upper = lower + spacing * np.array(shape)
    grid = Grid(shape, tuple(lower), tuple(upper))
    count = int(np.prod(shape)) * levels
    if len(data) != off + 8 * count:
        raise InvalidInputError("snapshot payload length does not match its header")
    payload = np.frombuffer(data, dtype="<c8", count=count, offset=off)
    values = payload.astype(np.complex128).reshape(tuple(shape) + (levels,))
    norm = float(np.sum(np.abs(values) ** 2) * grid.cell)
    if abs(norm - 1.0) > LOAD_NORM_TOL:
        raise InvalidInputError(f"snapshot is not normalized (norm^2 = {norm:.8g})")
    return GridWavefunction.normalized(grid, values, mu, metric, t)


def write_snapshot(path, psi: GridWavefunction):
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(psi))


def read_snapshot(path, metric=None) -> GridWavefunction:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read(), metric)
