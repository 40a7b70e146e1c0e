"""Fields on the flat torus C^n / (Z^n + i Z^n) and spectral complex calculus.

Real coordinates are ordered ``(x_1, y_1, ..., x_n, y_n)`` with ``z_k = x_k + i y_k``
and every axis has period 1. Arrays are indexed the same way, so a field on a
grid with ``res = (8, 8, 16, 16)`` has shape ``(8, 8, 16, 16)``.

Differentiation is done in Fourier space and is exact on resolved trigonometric
polynomials. The holomorphic derivative is ``d_k = (d/dx_k - i d/dy_k) / 2`` and the
antiholomorphic one is ``d_kbar = (d/dx_k + i d/dy_k) / 2``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "PeriodicGrid",
    "TrigTerm",
    "TrigExpression",
    "ScalarField",
    "OneFormField",
    "HermitianField",
    "sample_field",
    "complex_derivative",
    "complex_hessian",
    "reduce",
    "REAL_TOL",
]

REAL_TOL = 1e-12

_workers: int | None = None


def set_workers(workers: int | None) -> None:
    """Number of threads handed to ``scipy.fft`` (``None`` lets scipy decide)."""
    global _workers
    _workers = workers


def fftn(values: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return sfft.fftn(values, axes=axes, workers=_workers)


def ifftn(values: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    return sfft.ifftn(values, axes=axes, workers=_workers)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform, endpoint-excluded grid on the unit torus of complex dimension ``n``."""

    n: int
    res: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise ValueError(f"complex dimension must be 1, 2 or 3, got {self.n}")
        res = tuple(int(r) for r in self.res)
        object.__setattr__(self, "res", res)
        if len(res) != 2 * self.n:
            raise ValueError(f"expected {2 * self.n} resolutions, got {len(res)}")
        for axis, r in enumerate(res):
            if r < 4 or r % 2:
                raise ValueError(f"axis {axis}: resolution must be even and >= 4, got {r}")

    @classmethod
    def uniform(cls, n: int, res: int) -> PeriodicGrid:
        return cls(n, (res,) * (2 * n))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.res

    @property
    def size(self) -> int:
        return int(np.prod(self.res))

    @property
    def ndim(self) -> int:
        return 2 * self.n

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.arange(self.res[axis]) / self.res[axis]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per real axis."""
        out = []
        for axis in range(self.ndim):
            shape = [1] * self.ndim
            shape[axis] = self.res[axis]
            out.append(self.axis_coords(axis).reshape(shape))
        return out


@functools.lru_cache(maxsize=32)
def _symbols(grid: PeriodicGrid) -> dict[str, list[np.ndarray]]:
    # d1: first derivative symbols with the Nyquist mode zeroed;
    # d2: second derivative symbols keeping it.
    d1, d2 = [], []
    for axis, r in enumerate(grid.res):
        k = sfft.fftfreq(r, 1.0 / r)
        shape = [1] * grid.ndim
        shape[axis] = r
        first = 2j * np.pi * k
        first[r // 2] = 0.0
        d1.append(first.reshape(shape))
        d2.append((-(2 * np.pi * k) ** 2).reshape(shape))
    hol, anti = [], []
    for i in range(grid.n):
        dx, dy = d1[2 * i], d1[2 * i + 1]
        hol.append(0.5 * (dx - 1j * dy))
        anti.append(0.5 * (dx + 1j * dy))
    return {"d1": d1, "d2": d2, "hol": hol, "anti": anti}


def hessian_symbol(grid: PeriodicGrid, i: int, j: int) -> np.ndarray:
    """Fourier multiplier of ``d_i d_jbar``.

    The diagonal uses true second-derivative symbols, so it equals a quarter of the
    real Laplacian in the ``(x_i, y_i)`` plane. Off-diagonal entries are products of
    first-derivative symbols. Both choices are even in the wavevector, which makes
    the discrete operator and its transpose consistent.
    """
    s = _symbols(grid)
    if i == j:
        return 0.25 * (s["d2"][2 * i] + s["d2"][2 * i + 1])
    return s["hol"][i] * s["anti"][j]


def first_symbol(grid: PeriodicGrid, i: int, kind: str) -> np.ndarray:
    s = _symbols(grid)
    if kind == "holomorphic":
        return s["hol"][i]
    if kind == "antiholomorphic":
        return s["anti"][i]
    raise ValueError(f"unknown derivative kind {kind!r}")


def laplacian_symbol(grid: PeriodicGrid, metric_inverse: np.ndarray | None = None) -> np.ndarray:
    """Symbol of ``sum_ij C[j, i] d_i d_jbar`` for a constant Hermitian ``C`` (default identity)."""
    n = grid.n
    c = np.eye(n) if metric_inverse is None else np.asarray(metric_inverse)
    out = np.zeros(grid.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            if c[j, i] != 0:
                out = out + c[j, i] * hessian_symbol(grid, i, j)
    return out.real


def dealias_mask(grid: PeriodicGrid) -> np.ndarray:
    """Boolean mask keeping modes with ``|k| < res / 3`` on every axis."""
    mask = np.ones(grid.shape, dtype=bool)
    for axis, r in enumerate(grid.res):
        k = np.abs(sfft.fftfreq(r, 1.0 / r))
        shape = [1] * grid.ndim
        shape[axis] = r
        mask = mask & (k < r / 3.0).reshape(shape)
    return mask


# ---------------------------------------------------------------------------
# Trigonometric expressions


@dataclass(frozen=True)
class TrigTerm:
    amplitude: float
    wavevector: tuple[int, ...]
    phase: Literal["cos", "sin"] = "cos"

    def __post_init__(self) -> None:
        if self.phase not in ("cos", "sin"):
            raise ValueError(f"phase must be 'cos' or 'sin', got {self.phase!r}")
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "wavevector", tuple(int(k) for k in self.wavevector))


@dataclass(frozen=True)
class TrigExpression:
    """Finite real sum of ``amplitude * trig(2 pi k . xi)`` terms.

    Wavevectors shorter than the grid dimension are padded with zeros, so
    ``TrigTerm(1.0, (1,))`` means ``cos(2 pi x_1)`` on any torus.
    """

    terms: tuple[TrigTerm, ...] = ()

    def __init__(self, terms: Iterable[TrigTerm] = ()) -> None:
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def constant(cls, value: float) -> TrigExpression:
        return cls([TrigTerm(value, (), "cos")]) if value != 0 else cls()

    def __add__(self, other: TrigExpression) -> TrigExpression:
        return TrigExpression(self.terms + other.terms)

    def scaled(self, factor: float) -> TrigExpression:
        return TrigExpression(
            TrigTerm(t.amplitude * factor, t.wavevector, t.phase) for t in self.terms
        )

    def constant_term(self) -> float:
        return sum(
            t.amplitude for t in self.terms if t.phase == "cos" and not any(t.wavevector)
        )

    def padded(self, term: TrigTerm, ndim: int) -> tuple[int, ...]:
        k = term.wavevector
        if len(k) > ndim:
            if any(k[ndim:]):
                raise ValueError(f"wavevector {k} has more than {ndim} nonzero axes")
            k = k[:ndim]
        return k + (0,) * (ndim - len(k))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at an array of points of shape ``(..., 2n)``."""
        points = np.asarray(points, dtype=float)
        ndim = points.shape[-1]
        out = np.zeros(points.shape[:-1])
        for term in self.terms:
            k = np.array(self.padded(term, ndim), dtype=float)
            arg = 2 * np.pi * points @ k
            out = out + term.amplitude * (np.cos(arg) if term.phase == "cos" else np.sin(arg))
        return out

    def to_json(self) -> list[dict]:
        return [
            {"amp": t.amplitude, "k": list(t.wavevector), "trig": t.phase} for t in self.terms
        ]


# ---------------------------------------------------------------------------
# Fields


def _check_shape(grid: PeriodicGrid, values: np.ndarray, tail: tuple[int, ...] = ()) -> None:
    if values.shape != grid.shape + tail:
        raise ValueError(f"values have shape {values.shape}, expected {grid.shape + tail}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Complex samples on a grid, optionally flagged as real."""

    grid: PeriodicGrid
    values: np.ndarray
    real: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        _check_shape(self.grid, values)
        if self.real:
            scale = np.max(np.abs(values)) if values.size else 0.0
            worst = np.max(np.abs(values.imag)) if values.size else 0.0
            if worst > REAL_TOL * scale:
                raise ValueError(
                    f"field flagged real has imaginary part {worst:.3e} (scale {scale:.3e})"
                )
            values = values.real.astype(complex)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_real(cls, grid: PeriodicGrid, values: np.ndarray) -> ScalarField:
        return cls(grid, np.asarray(values, dtype=float).astype(complex), real=True)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> ScalarField:
        return cls(grid, np.zeros(grid.shape, dtype=complex), real=True)

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, value, dtype=complex), real=True)

    @property
    def re(self) -> np.ndarray:
        return self.values.real

    def conj(self) -> ScalarField:
        return ScalarField(self.grid, self.values.conj(), self.real)

    def __add__(self, other: ScalarField | float) -> ScalarField:
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values, self.real and other.real)
        return ScalarField(self.grid, self.values + other, self.real and np.isreal(other))

    def __sub__(self, other: ScalarField | float) -> ScalarField:
        if isinstance(other, ScalarField):
            return self + ScalarField(other.grid, -other.values, other.real)
        return self + (-other)

    def __mul__(self, scalar: float) -> ScalarField:
        return ScalarField(self.grid, self.values * scalar, self.real and np.isreal(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class OneFormField:
    """A (1,0)-form ``a = a_i dz^i``; ``a_ibar`` is the conjugate of ``a_i``."""

    grid: PeriodicGrid
    components: tuple[ScalarField, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if len(comps) != self.grid.n:
            raise ValueError(f"expected {self.grid.n} components, got {len(comps)}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> OneFormField:
        return cls.constant(grid, [0.0] * grid.n)

    @classmethod
    def constant(cls, grid: PeriodicGrid, values: Sequence[complex]) -> OneFormField:
        return cls(
            grid,
            tuple(ScalarField(grid, np.full(grid.shape, complex(v))) for v in values),
        )

    def array(self) -> np.ndarray:
        """Components stacked on a trailing axis, shape ``grid.shape + (n,)``."""
        return np.stack([c.values for c in self.components], axis=-1)

    def is_constant(self, tol: float = 0.0) -> bool:
        a = self.array()
        return bool(np.all(np.abs(a - a.reshape(-1, self.grid.n)[0]) <= tol))


@dataclass(frozen=True, eq=False)
class HermitianField:
    """Pointwise ``n x n`` Hermitian matrices, ``entries[..., i, j] = m_{i jbar}``."""

    grid: PeriodicGrid
    entries: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        n = self.grid.n
        _check_shape(self.grid, m, (n, n))
        defect = np.max(np.abs(m - np.swapaxes(m, -1, -2).conj()))
        scale = max(np.max(np.abs(m)), 1.0)
        if defect > REAL_TOL * scale:
            raise ValueError(f"matrix field is not Hermitian (defect {defect:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> HermitianField:
        return cls(grid, np.broadcast_to(np.eye(grid.n, dtype=complex), grid.shape + (grid.n,) * 2).copy())

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.entries[..., i, j])


# ---------------------------------------------------------------------------
# Operations


def sample_field(expr: TrigExpression, grid: PeriodicGrid) -> ScalarField:
    """Evaluate ``expr`` at the grid points; every wavevector must be resolvable."""
    values = np.zeros(grid.shape)
    coords = grid.coords()
    for term in expr.terms:
        k = expr.padded(term, grid.ndim)
        for axis, (kj, r) in enumerate(zip(k, grid.res)):
            if abs(kj) >= r / 2:
                raise ValueError(
                    f"term {term} is not resolvable: |k[{axis}]| = {abs(kj)} >= {r // 2}"
                )
        arg = sum(2 * np.pi * kj * x for kj, x in zip(k, coords) if kj)
        arg = np.broadcast_to(np.asarray(arg, dtype=float), grid.shape)
        values = values + term.amplitude * (np.cos(arg) if term.phase == "cos" else np.sin(arg))
    return ScalarField.from_real(grid, values)


def derivative_array(grid: PeriodicGrid, values: np.ndarray, index: int, kind: str) -> np.ndarray:
    return ifftn(first_symbol(grid, index, kind) * fftn(values))


def complex_derivative(
    f: ScalarField, index: int, kind: Literal["holomorphic", "antiholomorphic"] = "holomorphic"
) -> ScalarField:
    """``d_k f`` or ``d_kbar f`` for 1-based ``index``."""
    grid = f.grid
    if not 1 <= index <= grid.n:
        raise ValueError(f"index must lie in 1..{grid.n}, got {index}")
    return ScalarField(grid, derivative_array(grid, f.values, index - 1, kind))


def gradient_array(grid: PeriodicGrid, values: np.ndarray, spectrum: np.ndarray | None = None) -> np.ndarray:
    """Holomorphic gradient ``(d_1 f, ..., d_n f)`` stacked on a trailing axis."""
    if spectrum is None:
        spectrum = fftn(values)
    return np.stack(
        [ifftn(first_symbol(grid, i, "holomorphic") * spectrum) for i in range(grid.n)], axis=-1
    )


def hessian_array(grid: PeriodicGrid, values: np.ndarray, spectrum: np.ndarray | None = None) -> np.ndarray:
    """Complex Hessian of a real field, shape ``grid.shape + (n, n)``."""
    n = grid.n
    if spectrum is None:
        spectrum = fftn(values)
    out = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        out[..., i, i] = ifftn(hessian_symbol(grid, i, i) * spectrum).real
        for j in range(i + 1, n):
            out[..., i, j] = ifftn(hessian_symbol(grid, i, j) * spectrum)
            out[..., j, i] = out[..., i, j].conj()
    return out


def complex_hessian(u: ScalarField) -> HermitianField:
    if not u.real:
        raise ValueError("complex Hessian requires a real-flagged field")
    return HermitianField(u.grid, hessian_array(u.grid, u.values.real))


def reduce(f: ScalarField, mode: Literal["mean", "sup", "sup_abs", "min"] = "mean") -> float:
    if mode == "mean":
        m = np.mean(f.values)
        return float(m.real) if f.real else m
    if mode == "sup_abs":
        return float(np.max(np.abs(f.values)))
    if mode in ("sup", "min"):
        if not f.real:
            raise ValueError(f"{mode} requires a real-flagged field")
        return float(np.max(f.re) if mode == "sup" else np.min(f.re))
    raise ValueError(f"unknown reduction {mode!r}")
