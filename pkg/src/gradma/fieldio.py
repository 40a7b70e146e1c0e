"""GMAF1 binary field files.

Layout::

    GMAF1\\n
    n res_1 ... res_2n kind\\n        (kind: real | complex | hermitian)
    <little-endian float64 payload>

Points are written with the first axis (x_1) varying fastest. Complex values are
interleaved ``(re, im)``; Hermitian fields store the ``n * n`` row-major matrix
entries of each point consecutively.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .torus import HermitianField, PeriodicGrid, ScalarField

MAGIC = b"GMAF1\n"
KINDS = ("real", "complex", "hermitian")


class FieldFormatError(ValueError):
    def __init__(self, path: str | os.PathLike, message: str):
        super().__init__(f"{os.fspath(path)}: {message}")
        self.path = os.fspath(path)


def _grid_order(values: np.ndarray, ndim: int) -> np.ndarray:
    # reverse the grid axes so a C-order ravel makes x_1 fastest
    axes = tuple(reversed(range(ndim))) + tuple(range(ndim, values.ndim))
    return np.transpose(values, axes)


def encode_field(field: ScalarField | HermitianField) -> bytes:
    grid = field.grid
    if isinstance(field, HermitianField):
        kind, data = "hermitian", field.entries
    elif field.real:
        kind, data = "real", field.values.real
    else:
        kind, data = "complex", field.values
    data = np.ascontiguousarray(_grid_order(data, grid.ndim))
    if np.iscomplexobj(data):
        data = data.view(np.float64)
    header = f"{grid.n} {' '.join(str(r) for r in grid.res)} {kind}\n".encode("ascii")
    return MAGIC + header + data.astype("<f8", copy=False).tobytes()


def decode_field(blob: bytes, path: str | os.PathLike = "<bytes>") -> ScalarField | HermitianField:
    if not blob.startswith(MAGIC):
        raise FieldFormatError(path, "missing GMAF1 header")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise FieldFormatError(path, "truncated header")
    try:
        parts = blob[len(MAGIC):end].decode("ascii").split()
        n = int(parts[0])
        kind = parts[-1]
        res = tuple(int(r) for r in parts[1:-1])
        grid = PeriodicGrid(n, res)
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise FieldFormatError(path, f"bad header: {exc}") from exc
    if kind not in KINDS:
        raise FieldFormatError(path, f"unknown kind {kind!r}")
    payload = blob[end + 1:]
    per_point = {"real": 1, "complex": 2, "hermitian": 2 * n * n}[kind]
    expected = grid.size * per_point * 8
    if len(payload) != expected:
        raise FieldFormatError(path, f"payload has {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    rev = tuple(reversed(res))
    try:
        if kind == "real":
            values = flat.reshape(rev).transpose()
            return ScalarField.from_real(grid, values)
        cplx = flat.view(np.complex128)
        if kind == "complex":
            return ScalarField(grid, cplx.reshape(rev).transpose())
        m = cplx.reshape(rev + (n, n))
        m = np.transpose(m, tuple(reversed(range(grid.ndim))) + (grid.ndim, grid.ndim + 1))
        return HermitianField(grid, m)
    except ValueError as exc:
        raise FieldFormatError(path, str(exc)) from exc


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(path: str | os.PathLike, field: ScalarField | HermitianField) -> None:
    atomic_write(path, encode_field(field))


def read_field(path: str | os.PathLike) -> ScalarField | HermitianField:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FieldFormatError(path, str(exc)) from exc
    return decode_field(blob, path)
