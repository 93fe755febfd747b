"""Binary field snapshots.

Layout (all little-endian)::

    b"SLOWFLOW1"
    u32 n1, u32 n2, u32 n3
    f64 L1, f64 L2, f64 L3
    u32 ncomp
    ncomp x (n1 * n2 * n3) complex128, full spectrum, row-major mode order

Modes are in FFT order along every axis (``0, 1, ..., -1``) and use the
``norm="forward"`` amplitude convention of :mod:`slowflow.spectral`.
"""
from __future__ import annotations

import os
import struct

import numpy as np
import scipy.fft as sfft

from .spectral import Grid, ScalarField, VectorField, to_physical

MAGIC = b"SLOWFLOW1"
_HEADER = struct.Struct("<3I3dI")


def _full_spectrum(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    if grid.n3 == 1:
        return np.asarray(coeffs)
    phys = to_physical(grid, coeffs)
    return sfft.fftn(phys, axes=(-3, -2, -1), norm="forward")


def write_snapshot(path, field) -> None:
    """Write a :class:`ScalarField` or :class:`VectorField`."""
    grid = field.grid
    coeffs = field.coeffs if isinstance(field, VectorField) else field.coeffs[None]
    full = _full_spectrum(grid, coeffs)
    header = _HEADER.pack(grid.n1, grid.n2, grid.n3, grid.L1, grid.L2, grid.L3, full.shape[0])
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header)
            fh.write(np.ascontiguousarray(full, dtype="<c16").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write snapshot {os.fspath(path)!r}: {exc}") from exc


def read_snapshot(path):
    """Read a snapshot; returns a ScalarField for one component, else a VectorField."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{os.fspath(path)!r} is not a SLOWFLOW1 snapshot")
    n1, n2, n3, L1, L2, L3, ncomp = _HEADER.unpack_from(data, len(MAGIC))
    grid = Grid(n1, n2, n3, L1, L2, L3)
    offset = len(MAGIC) + _HEADER.size
    count = ncomp * n1 * n2 * n3
    if len(data) - offset != 16 * count:
        raise ValueError(f"{os.fspath(path)!r}: payload size mismatch")
    full = np.frombuffer(data, dtype="<c16", count=count, offset=offset).reshape(ncomp, n1, n2, n3)
    coeffs = full if n3 == 1 else full[..., : n3 // 2 + 1]
    if ncomp == 1:
        return ScalarField(grid, coeffs[0])
    return VectorField(grid, coeffs)
