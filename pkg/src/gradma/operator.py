"""The perturbed metric, the log-determinant residual and its linearization.

For a real potential ``u`` the perturbed metric is

    gt_{i jbar} = g_{i jbar} + a_i u_jbar + a_jbar u_i + u_{i jbar},

and the residual of the t-family equation is
``log det gt - log det g - t F - b``. Its derivative in ``u`` is

    L v = gt^{i jbar} (v_{i jbar} + a_i v_jbar + a_jbar v_i).

With ``G[i, j] = gt_{i jbar}`` and ``P = inv(G)`` the contraction is
``tr(P @ M)``, i.e. ``gt^{i jbar} = P[j, i]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hermitian as hm
from .torus import (
    HermitianField,
    OneFormField,
    PeriodicGrid,
    ScalarField,
    dealias_mask,
    fftn,
    first_symbol,
    gradient_array,
    hessian_array,
    hessian_symbol,
    ifftn,
)

__all__ = [
    "ProblemData",
    "OperatorOutput",
    "DegenerateMetric",
    "assemble_gtilde",
    "ma_residual",
    "linearized_apply",
    "linearized_adjoint_apply",
]


class DegenerateMetric(ValueError):
    """Raised when an operation needs a positive definite perturbed metric."""

    def __init__(self, min_eig: float):
        super().__init__(f"perturbed metric is not positive definite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


@dataclass(frozen=True, eq=False)
class ProblemData:
    grid: PeriodicGrid
    g: HermitianField
    a: OneFormField
    F: ScalarField
    dealias: bool = False

    def __post_init__(self) -> None:
        for name, obj in (("g", self.g), ("a", self.a), ("F", self.F)):
            if obj.grid != self.grid:
                raise ValueError(f"{name} lives on a different grid")
        if not self.F.real:
            raise ValueError("F must be real-flagged")
        lam = float(np.min(hm.min_eigenvalue(self.g.entries)))
        if lam <= 0:
            raise ValueError(f"reference metric is not positive definite (min eigenvalue {lam:.3e})")
        object.__setattr__(self, "_log_det_g", np.log(hm.det(self.g.entries)))
        object.__setattr__(self, "_a", self.a.array())

    @property
    def n(self) -> int:
        return self.grid.n

    @classmethod
    def flat(cls, grid: PeriodicGrid, F: ScalarField | None = None, a: OneFormField | None = None) -> ProblemData:
        return cls(
            grid,
            HermitianField.identity(grid),
            OneFormField.zeros(grid) if a is None else a,
            ScalarField.zeros(grid) if F is None else F,
        )

    def with_source(self, F: ScalarField) -> ProblemData:
        return ProblemData(self.grid, self.g, self.a, F, self.dealias)

    @property
    def log_det_g(self) -> np.ndarray:
        return self._log_det_g

    @property
    def a_array(self) -> np.ndarray:
        return self._a

    @property
    def g_array(self) -> np.ndarray:
        return self.g.entries


@dataclass(frozen=True, eq=False)
class OperatorOutput:
    gtilde: HermitianField
    log_det_ratio: ScalarField | None
    gtilde_inverse: HermitianField | None
    min_eig: float

    @property
    def grid(self) -> PeriodicGrid:
        return self.gtilde.grid

    def require_positive(self) -> None:
        if self.min_eig <= 0 or self.gtilde_inverse is None:
            raise DegenerateMetric(self.min_eig)


def _dealias(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    mask = dealias_mask(grid)
    axes = tuple(range(grid.ndim))
    spec = fftn(values, axes=axes)
    spec = spec * mask.reshape(mask.shape + (1,) * (values.ndim - grid.ndim))
    return ifftn(spec, axes=axes)


def perturbation_array(grid: PeriodicGrid, a: np.ndarray, v: np.ndarray, dealias: bool = False) -> np.ndarray:
    """``a_i v_jbar + a_jbar v_i + v_{i jbar}`` for a real array ``v``."""
    spectrum = fftn(v)
    grad = gradient_array(grid, v, spectrum)
    hess = hessian_array(grid, v, spectrum)
    # v real, so v_jbar = conj(v_j)
    cross = a[..., :, None] * grad.conj()[..., None, :]
    cross = cross + np.swapaxes(cross, -1, -2).conj()
    if dealias:
        cross = _dealias(grid, cross)
    return hess + cross


def assemble_gtilde(p: ProblemData, u: ScalarField) -> OperatorOutput:
    if not u.real:
        raise ValueError("potential must be real-flagged")
    if u.grid != p.grid:
        raise ValueError("potential lives on a different grid")
    gt = p.g_array + perturbation_array(p.grid, p.a_array, u.re, p.dealias)
    gt = 0.5 * (gt + np.swapaxes(gt, -1, -2).conj())
    min_eig = float(np.min(hm.min_eigenvalue(gt)))
    gtilde = HermitianField(p.grid, gt)
    if min_eig <= 0:
        return OperatorOutput(gtilde, None, None, min_eig)
    inverse = hm.inv(gt)
    inverse = 0.5 * (inverse + np.swapaxes(inverse, -1, -2).conj())
    ratio = np.log(hm.det(gt)) - p.log_det_g
    return OperatorOutput(
        gtilde,
        ScalarField.from_real(p.grid, ratio),
        HermitianField(p.grid, inverse),
        min_eig,
    )


def residual_array(p: ProblemData, op: OperatorOutput, b: float, t: float) -> np.ndarray:
    op.require_positive()
    return op.log_det_ratio.re - t * p.F.re - b


def ma_residual(p: ProblemData, u: ScalarField, b: float, t: float) -> ScalarField:
    """``log det gt - log det g - t F - b``; zero exactly when ``(u, b)`` solves the t-equation."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    op = assemble_gtilde(p, u)
    return ScalarField.from_real(p.grid, residual_array(p, op, b, t))


def apply_array(op: OperatorOutput, a: np.ndarray, v: np.ndarray, dealias: bool = False) -> np.ndarray:
    m = perturbation_array(op.grid, a, v, dealias)
    return hm.trace_product(op.gtilde_inverse.entries, m).real


def adjoint_array(op: OperatorOutput, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Transpose of ``L`` under ``<f, h> = mean(f h)``.

    ``L* w = d_jbar d_i (P^{i jbar} w) - d_i (P^{i jbar} a_jbar w) - d_jbar (P^{i jbar} a_i w)``.
    """
    grid = op.grid
    n = grid.n
    pinv = op.gtilde_inverse.entries
    spec = np.zeros(grid.shape, dtype=complex)
    for i in range(n):
        for j in range(n):
            coef = pinv[..., j, i] * w
            spec += hessian_symbol(grid, i, j) * fftn(coef)
            spec -= first_symbol(grid, i, "holomorphic") * fftn(coef * a[..., j].conj())
            spec -= first_symbol(grid, j, "antiholomorphic") * fftn(coef * a[..., i])
    return ifftn(spec).real


def linearized_apply(op: OperatorOutput, a: OneFormField, v: ScalarField, dealias: bool = False) -> ScalarField:
    op.require_positive()
    if not v.real:
        raise ValueError("direction must be real-flagged")
    return ScalarField.from_real(op.grid, apply_array(op, a.array(), v.re, dealias))


def linearized_adjoint_apply(op: OperatorOutput, a: OneFormField, w: ScalarField) -> ScalarField:
    op.require_positive()
    if not w.real:
        raise ValueError("weight must be real-flagged")
    return ScalarField.from_real(op.grid, adjoint_array(op, a.array(), w.re))
