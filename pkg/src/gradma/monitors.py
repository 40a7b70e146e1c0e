"""Observable quantities behind the a-priori estimates, and consistency probes.

None of these certify an inequality with an unknown constant. They report the
ratios the estimates bound, so that refinement studies can check the numbers
settle instead of blowing up.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import hermitian as hm
from .operator import ProblemData, assemble_gtilde
from .solver import (
    ContinuationAborted,
    NewtonFailure,
    Solution,
    SolverConfig,
    SolveState,
    continuity_solve,
    newton_solve_at_t,
    normalize_sup,
)
from .torus import (
    HermitianField,
    PeriodicGrid,
    ScalarField,
    TrigExpression,
    TrigTerm,
    fftn,
    first_symbol,
    gradient_array,
    hessian_array,
    ifftn,
    sample_field,
)

__all__ = [
    "EstimateReport",
    "estimate_report",
    "aeppli_defect",
    "NonHolomorphicForm",
    "EigenDerivativeCheck",
    "SpectralGapTooSmall",
    "eigenvalue_derivative_check",
    "UniquenessReport",
    "uniqueness_probe",
]

HOLOMORPHY_TOL = 1e-10


@dataclass(frozen=True)
class EstimateReport:
    sup_abs_u: float
    grad_sup_sq: float
    K: float
    lambda1_max: float
    hessian_sup: float
    c2_ratio: float
    b_bound_slack: float
    aeppli_defect: float | None
    sup_F: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> EstimateReport:
        return cls(**data)


def _potential(sol: Solution | ScalarField) -> ScalarField:
    return sol.u if isinstance(sol, Solution) else sol


def gradient_norm_sq(p: ProblemData, u: ScalarField) -> np.ndarray:
    """Pointwise ``|du|^2_g = g^{i jbar} u_i u_jbar``."""
    grad = gradient_array(p.grid, u.re)
    ginv = hm.inv(p.g_array)
    return np.einsum("...j,...ji,...i->...", grad.conj(), ginv, grad).real


def hessian_norm(p: ProblemData, u: ScalarField) -> np.ndarray:
    """Pointwise Frobenius norm of the complex Hessian measured in ``g``."""
    hess = hessian_array(p.grid, u.re)
    normalized = hm.congruence(p.g_array, hess)
    return np.sqrt(np.sum(np.abs(normalized) ** 2, axis=(-1, -2)))


def estimate_report(p: ProblemData, sol: Solution) -> EstimateReport:
    u = sol.u
    grad_sq = float(np.max(gradient_norm_sq(p, u)))
    op = assemble_gtilde(p, u)
    lam = hm.eigvalsh(hm.congruence(p.g_array, op.gtilde.entries))
    hess_sup = float(np.max(hessian_norm(p, u)))
    K = grad_sq + 1.0
    sup_F = float(np.max(np.abs(p.F.re)))
    try:
        aeppli = aeppli_defect(p, u)
    except NonHolomorphicForm:
        aeppli = None
    return EstimateReport(
        sup_abs_u=float(np.max(np.abs(u.re))),
        grad_sup_sq=grad_sq,
        K=K,
        lambda1_max=float(np.max(lam[..., -1])),
        hessian_sup=hess_sup,
        c2_ratio=hess_sup / K,
        b_bound_slack=sup_F - abs(sol.b),
        aeppli_defect=aeppli,
        sup_F=sup_F,
    )


# ---------------------------------------------------------------------------
# Aeppli identity


class NonHolomorphicForm(ValueError):
    def __init__(self, defect: float):
        super().__init__(f"(1,0)-form is not holomorphic: sup |d_jbar a_i| = {defect:.3e}")
        self.defect = defect


def holomorphy_defect(p: ProblemData) -> float:
    grid = p.grid
    a = p.a_array
    worst = 0.0
    for i in range(grid.n):
        spec = fftn(a[..., i])
        for j in range(grid.n):
            d = ifftn(first_symbol(grid, j, "antiholomorphic") * spec)
            worst = max(worst, float(np.max(np.abs(d))))
    return worst


def aeppli_defect(p: ProblemData, sol: Solution | ScalarField) -> float:
    """Sup-distance between ``gt - g`` and ``d(gamma bar) + dbar(gamma)``.

    ``gamma_k = -i (u a_k + u_k / 2)``. In coordinates the (1,1)-form
    ``d(gamma bar) + dbar(gamma)`` has coefficient ``d_i conj(gamma_j) - d_jbar gamma_i``
    on ``dz^i ^ dzbar^j``, which must equal ``i (gt - g)_{i jbar}``.
    """
    defect = holomorphy_defect(p)
    if defect > HOLOMORPHY_TOL:
        raise NonHolomorphicForm(defect)
    u = _potential(sol)
    grid = p.grid
    n = grid.n
    a = p.a_array
    grad = gradient_array(grid, u.re)
    gamma = -1j * (u.re[..., None] * a + 0.5 * grad)
    gamma_spec = [fftn(gamma[..., k]) for k in range(n)]
    gamma_bar_spec = [fftn(gamma[..., k].conj()) for k in range(n)]
    coef = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            coef[..., i, j] = ifftn(
                first_symbol(grid, i, "holomorphic") * gamma_bar_spec[j]
                - first_symbol(grid, j, "antiholomorphic") * gamma_spec[i]
            )
    gt = assemble_gtilde(p, u).gtilde.entries
    return float(np.max(np.abs((gt - p.g_array) + 1j * coef)))


# ---------------------------------------------------------------------------
# First-order eigenvalue perturbation


class SpectralGapTooSmall(ValueError):
    """The top eigenvalue is (numerically) multiple, so it need not be differentiable."""

    def __init__(self, gap: float):
        super().__init__(f"top eigenvalue gap {gap:.3e} below threshold")
        self.gap = gap


@dataclass(frozen=True)
class EigenDerivativeCheck:
    measured: float
    predicted: float
    error: float
    error_half: float
    ratio: float
    roundoff: float

    @property
    def passed(self) -> bool:
        # an error already at the roundoff level has no measurable order
        return self.ratio >= 3.5 or self.error <= self.roundoff


def _line_interpolant(line: np.ndarray, x: float) -> np.ndarray:
    """Trigonometric interpolant of samples ``line[j]`` at ``j / r``, evaluated at ``x``."""
    r = line.shape[0]
    coef = np.fft.fft(line, axis=0) / r
    k = np.fft.fftfreq(r, 1.0 / r)
    basis = np.exp(2j * np.pi * k * x)
    basis[r // 2] = np.cos(np.pi * r * x)
    return np.tensordot(basis, coef, axes=(0, 0))


def eigenvalue_derivative_check(
    field: HermitianField,
    point: Sequence[int],
    axis: int,
    h: float = 1e-3,
    min_gap: float = 1e-6,
) -> EigenDerivativeCheck:
    """Compare ``d lambda_1 / d xi_axis`` with ``V^H (d G / d xi_axis) V``.

    ``V`` is the unit eigenvector of the largest eigenvalue at ``point``. The
    measured side is a centred difference of the largest eigenvalue of the
    trigonometric interpolant, with steps ``h`` and ``h / 2``.
    """
    grid = field.grid
    point = tuple(int(i) for i in point)
    m = field.entries[point]
    w, v = hm.eigh(m[None])
    w, v = w[0], v[0]
    n = grid.n
    if n > 1 and w[-1] - w[-2] < min_gap:
        raise SpectralGapTooSmall(float(w[-1] - w[-2]))
    top = v[:, -1]

    index: list = list(point)
    index[axis] = slice(None)
    line = field.entries[tuple(index)]
    r = grid.res[axis]
    k = np.fft.fftfreq(r, 1.0 / r)
    sym = 2j * np.pi * k
    sym[r // 2] = 0.0
    dline = np.fft.ifft(sym[:, None, None] * np.fft.fft(line, axis=0), axis=0)
    dm = dline[point[axis]]
    predicted = float((top.conj() @ dm @ top).real)

    x0 = point[axis] / r

    def top_eig(x: float) -> float:
        mat = _line_interpolant(line, x)
        mat = 0.5 * (mat + mat.conj().T)
        return float(hm.eigvalsh(mat[None])[0, -1])

    def centred(step: float) -> float:
        return (top_eig(x0 + step) - top_eig(x0 - step)) / (2 * step)

    measured_h = centred(h)
    measured_half = centred(h / 2)
    err = abs(measured_h - predicted)
    err_half = abs(measured_half - predicted)
    ratio = err / err_half if err_half > 0 else math.inf
    scale = max(float(np.max(np.abs(line))), 1e-300)
    roundoff = 1e3 * np.finfo(float).eps * scale / h
    return EigenDerivativeCheck(measured_half, predicted, err, err_half, ratio, roundoff)


# ---------------------------------------------------------------------------
# Uniqueness


@dataclass
class UniquenessReport:
    tolerance: float
    u_distances: list[float] = field(default_factory=list)
    b_distances: list[float] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def max_u_distance(self) -> float:
        return max(self.u_distances, default=0.0)

    @property
    def max_b_distance(self) -> float:
        return max(self.b_distances, default=0.0)

    @property
    def passed(self) -> bool:
        return bool(
            not self.failures
            and self.max_u_distance <= self.tolerance
            and self.max_b_distance <= self.tolerance
        )

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "u_distances": self.u_distances,
            "b_distances": self.b_distances,
            "failures": self.failures,
            "max_u_distance": self.max_u_distance,
            "max_b_distance": self.max_b_distance,
            "passed": self.passed,
        }


def _random_smooth(grid: PeriodicGrid, rng: np.random.Generator, modes: int = 2) -> ScalarField:
    terms = []
    for _ in range(4):
        k = rng.integers(-modes, modes + 1, size=grid.ndim)
        terms.append(TrigTerm(rng.uniform(-1, 1), tuple(k), rng.choice(["cos", "sin"])))
    values = sample_field(TrigExpression(terms), grid).re
    values = values - values.mean()
    scale = np.max(np.abs(values))
    return ScalarField.from_real(grid, values / scale if scale > 0 else values)


def uniqueness_probe(
    p: ProblemData,
    cfg: SolverConfig,
    trials: int = 3,
    seed: int = 0,
    primary: Solution | None = None,
    warm_amplitude: float = 0.02,
) -> UniquenessReport:
    """Re-solve ``trials`` times and measure the spread of ``(u, b)``.

    Trial ``i`` runs the continuation with ``t_steps + i + 1`` initial steps
    (alternating secant prediction), then Newton at ``t = 1`` from the primary
    solution plus a random smooth admissible perturbation and a shifted ``b``.
    Every re-solve is compared with the primary one after sup-normalization.
    """
    if primary is None:
        primary = continuity_solve(p, cfg)
    rng = np.random.default_rng(seed)
    report = UniquenessReport(10 * cfg.newton_tol)
    base_eig = assemble_gtilde(p, primary.u).min_eig

    def compare(u: ScalarField, b: float) -> None:
        report.u_distances.append(float(np.max(np.abs(normalize_sup(u).re - primary.u.re))))
        report.b_distances.append(float(abs(b - primary.b)))

    for trial in range(trials):
        schedule = replace(cfg, t_steps=cfg.t_steps + trial + 1, secant=bool(trial % 2))
        try:
            sol = continuity_solve(p, schedule)
            compare(sol.u, sol.b)
        except ContinuationAborted as exc:
            report.failures.append(f"trial {trial} continuation: {exc}")

        bump = _random_smooth(p.grid, rng)
        amp = warm_amplitude
        while True:
            warm_u = ScalarField.from_real(p.grid, primary.u.re + amp * bump.re)
            if assemble_gtilde(p, warm_u).min_eig >= 0.5 * base_eig:
                break
            amp *= 0.5
        warm_b = primary.b + rng.uniform(-0.1, 0.1)
        warm = SolveState(1.0, warm_u, warm_b, math.inf, base_eig)
        try:
            state = newton_solve_at_t(p, cfg, warm, 1.0)
            compare(state.u, state.b)
        except NewtonFailure as exc:
            report.failures.append(f"trial {trial} warm start: {exc}")
    return report
