"""Continuation in ``t`` with a bordered Newton-Krylov solve at each step.

The unknown is the pair ``(u, b)``. Each Newton step solves

    L du - db = -r,    mean(du) = 0,

with GMRES on a single real field ``y``: ``du = y - mean(y)`` and ``db = -mean(y)``.
In these variables the flat Laplacian plus the border is diagonal in Fourier
space, which is what the preconditioner inverts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .operator import (
    OperatorOutput,
    ProblemData,
    adjoint_array,
    apply_array,
    assemble_gtilde,
    residual_array,
)
from .torus import OneFormField, ScalarField, fftn, ifftn, laplacian_symbol

__all__ = [
    "SolverConfig",
    "SolveState",
    "Solution",
    "TraceRecord",
    "NewtonFailure",
    "KrylovFailure",
    "ContinuationAborted",
    "KernelDensityFailure",
    "krylov_solve",
    "newton_solve_at_t",
    "continuity_solve",
    "kernel_density",
    "normalize_sup",
    "format_trace",
]

log = logging.getLogger(__name__)

MIN_STEP = 2.0**-10


@dataclass(frozen=True)
class SolverConfig:
    t_steps: int = 4
    newton_tol: float = 1e-11
    max_newton: int = 30
    krylov_tol: float = 1e-10
    krylov_max: int = 500
    krylov_restart: int = 60
    eig_floor: float = 0.1
    damping_min: float = 2.0**-10
    secant: bool = False

    def __post_init__(self) -> None:
        if self.t_steps < 1:
            raise ValueError("t_steps must be positive")
        for name in ("newton_tol", "krylov_tol", "eig_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_newton < 1 or self.krylov_max < 1 or self.krylov_restart < 1:
            raise ValueError("iteration caps must be positive")
        if not 0 < self.damping_min <= 1:
            raise ValueError("damping_min must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SolveState:
    t: float
    u: ScalarField
    b: float
    residual_norm: float
    min_eig: float
    newton_iters: int = 0
    history: tuple[float, ...] = ()


@dataclass(frozen=True)
class TraceRecord:
    t: float
    newton_iter: int
    residual_sup: float
    min_eig: float
    b: float

    def line(self) -> str:
        return f"{self.t:.17g} {self.newton_iter:d} {self.residual_sup:.17g} {self.min_eig:.17g} {self.b:.17g}"

    @classmethod
    def parse(cls, line: str) -> TraceRecord:
        t, k, r, m, b = line.split()
        return cls(float(t), int(k), float(r), float(m), float(b))


def format_trace(records: list[TraceRecord]) -> str:
    return "".join(rec.line() + "\n" for rec in records)


@dataclass(eq=False)
class Solution:
    u: ScalarField
    b: float
    states: list[SolveState]
    trace: list[TraceRecord]
    residual_norm: float
    report: object | None = None


class NewtonFailure(RuntimeError):
    """A Newton solve at fixed ``t`` did not converge; the homotopy should shrink its step."""

    def __init__(self, message: str, state: SolveState | None = None):
        super().__init__(message)
        self.state = state


class KrylovFailure(RuntimeError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (relative residual {achieved:.3e})")
        self.achieved = achieved


class ContinuationAborted(RuntimeError):
    def __init__(self, message: str, last_state: SolveState, trace: list[TraceRecord]):
        super().__init__(message)
        self.last_state = last_state
        self.trace = trace


class KernelDensityFailure(RuntimeError):
    def __init__(self, message: str, defect: float):
        super().__init__(f"{message} (defect {defect:.3e})")
        self.defect = defect


# ---------------------------------------------------------------------------
# Linear solves


def _preconditioner_symbol(op: OperatorOutput) -> np.ndarray:
    # constant-coefficient operator built from the grid average of gt^{-1};
    # the zero mode belongs to the border unknown
    cbar = np.mean(op.gtilde_inverse.entries.reshape(-1, op.grid.n, op.grid.n), axis=0)
    cbar = 0.5 * (cbar + cbar.conj().T)
    sym = laplacian_symbol(op.grid, cbar)
    sym.flat[0] = 1.0
    return sym


def _bordered_gmres(
    matvec: Callable[[np.ndarray], np.ndarray],
    symbol: np.ndarray,
    rhs: np.ndarray,
    cfg: SolverConfig,
) -> np.ndarray:
    shape = rhs.shape
    size = rhs.size
    rnorm = np.linalg.norm(rhs)
    if rnorm == 0:
        return np.zeros(shape)

    def precond(z: np.ndarray) -> np.ndarray:
        return ifftn(fftn(z.reshape(shape)) / symbol).real

    def bordered(z: np.ndarray) -> np.ndarray:
        y = precond(z)
        mean = y.mean()
        return (matvec(y - mean) + mean).ravel()

    operator = LinearOperator((size, size), matvec=bordered, dtype=float)
    restart = min(cfg.krylov_restart, cfg.krylov_max)
    z, _ = gmres(
        operator,
        rhs.ravel(),
        rtol=cfg.krylov_tol,
        atol=0.0,
        restart=restart,
        maxiter=max(1, math.ceil(cfg.krylov_max / restart)),
    )
    achieved = np.linalg.norm(bordered(z) - rhs.ravel()) / rnorm
    if not achieved <= cfg.krylov_tol * 1.0001:
        raise KrylovFailure("GMRES iteration cap reached", achieved)
    return precond(z)


def krylov_solve(
    op: OperatorOutput,
    a: OneFormField,
    rhs: ScalarField,
    cfg: SolverConfig = SolverConfig(),
    dealias: bool = False,
) -> tuple[ScalarField, float]:
    """Solve ``L du - db = rhs`` with ``mean(du) = 0``; returns ``(du, db)``."""
    op.require_positive()
    if not rhs.real:
        raise ValueError("right-hand side must be real-flagged")
    a_arr = a.array()
    y = _bordered_gmres(
        lambda v: apply_array(op, a_arr, v, dealias), _preconditioner_symbol(op), rhs.re, cfg
    )
    mean = float(y.mean())
    return ScalarField.from_real(op.grid, y - mean), -mean


# ---------------------------------------------------------------------------
# Newton at fixed t


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x)))


def newton_solve_at_t(
    p: ProblemData,
    cfg: SolverConfig,
    warm: SolveState,
    t: float,
    trace: list[TraceRecord] | None = None,
) -> SolveState:
    """Damped Newton for ``log det gt - log det g = t F + b``, starting at ``warm``."""
    u = warm.u.re.copy()
    b = float(warm.b)
    op = assemble_gtilde(p, ScalarField.from_real(p.grid, u))
    if op.min_eig <= 0:
        raise NewtonFailure(f"warm start is not admissible (min eigenvalue {op.min_eig:.3e})")
    r = residual_array(p, op, b, t)
    res = _sup(r)
    history = [res]
    a_arr = p.a_array
    k = 0
    while True:
        if trace is not None:
            trace.append(TraceRecord(t, k, res, op.min_eig, b))
        if res <= cfg.newton_tol:
            break
        if k >= cfg.max_newton:
            raise NewtonFailure(f"no convergence at t={t} after {k} iterations (residual {res:.3e})")
        try:
            y = _bordered_gmres(
                lambda v: apply_array(op, a_arr, v, p.dealias), _preconditioner_symbol(op), -r, cfg
            )
        except KrylovFailure as exc:
            raise NewtonFailure(f"linear solve failed at t={t}: {exc}") from exc
        mean = y.mean()
        du, db = y - mean, -mean
        lam = 1.0
        while True:
            u_try = u + lam * du
            b_try = b + lam * db
            op_try = assemble_gtilde(p, ScalarField.from_real(p.grid, u_try))
            if op_try.min_eig >= cfg.eig_floor * op.min_eig:
                r_try = residual_array(p, op_try, b_try, t)
                res_try = _sup(r_try)
                if res_try < res or res_try <= cfg.newton_tol:
                    break
            lam *= 0.5
            if lam < cfg.damping_min:
                raise NewtonFailure(f"line search failed at t={t}, iteration {k}")
        u, b, op, r, res = u_try, b_try, op_try, r_try, res_try
        history.append(res)
        k += 1
        log.debug("t=%.6f iter=%d residual=%.3e damping=%.3g", t, k, res, lam)
    return SolveState(t, ScalarField.from_real(p.grid, u), b, res, op.min_eig, k, tuple(history))


# ---------------------------------------------------------------------------
# Homotopy


def normalize_sup(u: ScalarField) -> ScalarField:
    if not u.real:
        raise ValueError("normalization requires a real-flagged field")
    return ScalarField.from_real(u.grid, u.re - np.max(u.re))


def continuity_solve(
    p: ProblemData,
    cfg: SolverConfig = SolverConfig(),
) -> Solution:
    """Follow the family from ``(0, 0)`` at ``t = 0`` to ``t = 1``.

    Steps start uniform at ``1 / t_steps``; a failed Newton solve halves the step,
    two consecutive successes double it again (never above the initial step).
    """
    trace: list[TraceRecord] = []
    zero = ScalarField.zeros(p.grid)
    state = newton_solve_at_t(p, cfg, SolveState(0.0, zero, 0.0, math.inf, math.inf), 0.0, trace)
    states = [state]
    prev: SolveState | None = None
    dt0 = 1.0 / cfg.t_steps
    dt = dt0
    successes = 0
    while state.t < 1.0:
        t_new = min(1.0, state.t + dt)
        warm = state
        if cfg.secant and prev is not None:
            ratio = (t_new - state.t) / (state.t - prev.t)
            guess = ScalarField.from_real(p.grid, state.u.re + ratio * (state.u.re - prev.u.re))
            if assemble_gtilde(p, guess).min_eig > 0:
                warm = replace(state, u=guess, b=state.b + ratio * (state.b - prev.b))
        try:
            new = newton_solve_at_t(p, cfg, warm, t_new, trace)
        except NewtonFailure as exc:
            successes = 0
            dt *= 0.5
            log.info("step to t=%.6f rejected (%s); step now %.3g", t_new, exc, dt)
            if dt < MIN_STEP:
                raise ContinuationAborted(
                    f"homotopy step underflow at t={state.t:.6f}: {exc}", state, trace
                ) from exc
            continue
        prev, state = state, new
        states.append(state)
        successes += 1
        if successes >= 2:
            dt = min(2 * dt, dt0)
            successes = 0
    u = normalize_sup(state.u)
    residual = _sup(residual_array(p, assemble_gtilde(p, u), state.b, 1.0))
    return Solution(u, state.b, states, trace, residual)


# ---------------------------------------------------------------------------
# Kernel of the adjoint


def kernel_density(
    op: OperatorOutput,
    a: OneFormField,
    tol: float = 1e-10,
    max_iter: int = 20,
    cfg: SolverConfig = SolverConfig(krylov_tol=1e-11, krylov_max=1000),
) -> ScalarField:
    """Positive ``w`` with ``mean(w) = 1`` spanning the kernel of ``L*``.

    Inverse iteration at shift zero: each sweep removes the component of ``L* w``
    by a Krylov solve on the mean-zero complement, then renormalizes.
    """
    op.require_positive()
    a_arr = a.array()
    symbol = _preconditioner_symbol(op)
    w = np.ones(op.grid.shape)
    defect = _sup(adjoint_array(op, a_arr, w))
    for _ in range(max_iter):
        if defect <= tol * _sup(w):
            break
        try:
            y = _bordered_gmres(lambda v: adjoint_array(op, a_arr, v), symbol, adjoint_array(op, a_arr, w), cfg)
        except KrylovFailure as exc:
            raise KernelDensityFailure("inner solve failed", defect) from exc
        w = w - (y - y.mean())
        w = w / w.mean()
        new_defect = _sup(adjoint_array(op, a_arr, w))
        if new_defect >= defect:
            raise KernelDensityFailure("iteration stagnated", new_defect)
        defect = new_defect
    else:
        raise KernelDensityFailure("iteration cap reached", defect)
    if np.min(w) <= 0:
        raise KernelDensityFailure("density is not positive", defect)
    return ScalarField.from_real(op.grid, w)
