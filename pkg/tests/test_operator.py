import numpy as np
import pytest
import sympy as sp

from conftest import grid_points, random_trig
from gradma import hermitian as hm
from gradma.operator import (
    DegenerateMetric,
    ProblemData,
    assemble_gtilde,
    linearized_adjoint_apply,
    linearized_apply,
    ma_residual,
)
from gradma.torus import (
    HermitianField,
    OneFormField,
    PeriodicGrid,
    ScalarField,
    TrigExpression,
    TrigTerm,
    complex_derivative,
    sample_field,
)


def cos1(eps=1.0, phase="cos"):
    return TrigExpression([TrigTerm(eps, (1,), phase)])


def smooth_metric(grid, rng, amp=0.2):
    n = grid.n
    m = np.broadcast_to(np.eye(n, dtype=complex), grid.shape + (n, n)).copy()
    for i in range(n):
        m[..., i, i] += amp * sample_field(random_trig(rng, grid.ndim, 2, 1), grid).re
        for j in range(i + 1, n):
            off = amp * (
                sample_field(random_trig(rng, grid.ndim, 2, 1), grid).re
                + 1j * sample_field(random_trig(rng, grid.ndim, 2, 1), grid).re
            ) / n
            m[..., i, j] += off
            m[..., j, i] += off.conj()
    return HermitianField(grid, m)


def smooth_form(grid, rng, amp=0.2):
    return OneFormField(
        grid,
        tuple(
            ScalarField(
                grid,
                amp * (sample_field(random_trig(rng, grid.ndim, 2, 1), grid).re
                       + 1j * sample_field(random_trig(rng, grid.ndim, 2, 1), grid).re),
            )
            for _ in range(grid.n)
        ),
    )


def admissible_potential(p, rng, amp=0.05):
    u = sample_field(random_trig(rng, p.grid.ndim, 4, 2), p.grid)
    u = u * (amp / max(np.max(np.abs(u.re)), 1e-12))
    while assemble_gtilde(p, u).min_eig <= 0.2:
        u = u * 0.5
    return u


@pytest.fixture(params=[1, 2, 3], ids=lambda n: f"n{n}")
def problem(request):
    n = request.param
    rng = np.random.default_rng(100 + n)
    grid = PeriodicGrid.uniform(n, {1: 16, 2: 8, 3: 6}[n])
    F = sample_field(random_trig(rng, grid.ndim, 3, 1, 0.3), grid)
    return ProblemData(grid, smooth_metric(grid, rng), smooth_form(grid, rng), F), rng


class TestAssemble:
    def test_zero_potential_gives_reference_metric(self, problem):
        p, _ = problem
        op = assemble_gtilde(p, ScalarField.zeros(p.grid))
        np.testing.assert_allclose(op.gtilde.entries, p.g.entries, atol=1e-15)
        assert op.min_eig == pytest.approx(np.min(np.linalg.eigvalsh(p.g.entries)), abs=1e-12)

    @pytest.mark.parametrize("eps,positive", [(0.09, True), (0.11, False)])
    def test_n1_positivity_threshold(self, eps, positive):
        grid = PeriodicGrid.uniform(1, 16)
        p = ProblemData.flat(grid)
        op = assemble_gtilde(p, sample_field(cos1(eps), grid))
        x = grid_points(grid)[..., 0]
        np.testing.assert_allclose(op.gtilde.entries[..., 0, 0], 1 - eps * np.pi**2 * np.cos(2 * np.pi * x), atol=1e-13)
        assert (op.min_eig > 0) == positive
        assert (op.log_det_ratio is not None) == positive
        if not positive:
            with pytest.raises(DegenerateMetric):
                ma_residual(p, sample_field(cos1(eps), grid), 0.0, 1.0)

    def test_constant_form_against_symbolic_oracle(self):
        c, eps = 0.3, 0.04
        x, y = sp.symbols("x y", real=True)
        u = eps * sp.sin(2 * sp.pi * x)
        d = lambda f: (sp.diff(f, x) - sp.I * sp.diff(f, y)) / 2
        dbar = lambda f: (sp.diff(f, x) + sp.I * sp.diff(f, y)) / 2
        gt = sp.lambdify((x, y), 1 + c * dbar(u) + c * d(u) + d(dbar(u)), "numpy")
        grid = PeriodicGrid.uniform(1, 16)
        p = ProblemData.flat(grid, a=OneFormField.constant(grid, [c]))
        op = assemble_gtilde(p, sample_field(cos1(eps, "sin"), grid))
        pts = grid_points(grid)
        np.testing.assert_allclose(op.gtilde.entries[..., 0, 0], gt(pts[..., 0], pts[..., 1]), atol=1e-13)

    def test_assembly_identity_and_inverse(self, problem):
        p, rng = problem
        u = admissible_potential(p, rng)
        op = assemble_gtilde(p, u)
        a = p.a.array()
        grad = np.stack([complex_derivative(u, i + 1).values for i in range(p.n)], axis=-1)
        hess = np.empty_like(op.gtilde.entries)
        for i in range(p.n):
            for j in range(p.n):
                hess[..., i, j] = complex_derivative(
                    complex_derivative(u, j + 1, "antiholomorphic"), i + 1
                ).values
        expected = p.g.entries + a[..., :, None] * grad.conj()[..., None, :] + a.conj()[..., None, :] * grad[..., :, None] + hess
        np.testing.assert_allclose(op.gtilde.entries, expected, atol=1e-12)
        eye = np.broadcast_to(np.eye(p.n), op.gtilde.entries.shape)
        np.testing.assert_allclose(op.gtilde_inverse.entries @ op.gtilde.entries, eye, atol=1e-10)
        assert np.all(np.linalg.eigvalsh(op.gtilde.entries) > 0)


class TestResidual:
    def test_zero_state(self, problem):
        p, _ = problem
        r = ma_residual(p, ScalarField.zeros(p.grid), 0.0, 0.7)
        np.testing.assert_allclose(r.re, -0.7 * p.F.re, atol=1e-14)

    def test_constants_cancel(self):
        grid = PeriodicGrid.uniform(2, 6)
        p = ProblemData.flat(grid, F=ScalarField.constant(grid, 0.4))
        r = ma_residual(p, ScalarField.zeros(grid), -0.4, 1.0)
        assert np.max(np.abs(r.re)) == 0

    def test_manufactured_source_solves(self, problem):
        p, rng = problem
        u = admissible_potential(p, rng)
        F = assemble_gtilde(p, u).log_det_ratio
        r = ma_residual(p.with_source(F), u, 0.0, 1.0)
        assert np.max(np.abs(r.re)) <= 1e-10

    def test_shift_invariance(self, problem):
        p, rng = problem
        u = admissible_potential(p, rng)
        r0 = ma_residual(p, u, 0.1, 0.5)
        r1 = ma_residual(p, u + 3.0, 0.1, 0.5)
        assert np.max(np.abs(r0.re - r1.re)) <= 1e-12


class TestLinearized:
    def test_constant_direction(self, problem):
        p, rng = problem
        op = assemble_gtilde(p, admissible_potential(p, rng))
        lv = linearized_apply(op, p.a, ScalarField.constant(p.grid, 2.0))
        assert np.max(np.abs(lv.re)) < 1e-12

    def test_flat_laplacian(self):
        grid = PeriodicGrid.uniform(1, 16)
        p = ProblemData.flat(grid)
        op = assemble_gtilde(p, ScalarField.zeros(grid))
        lv = linearized_apply(op, p.a, sample_field(cos1(), grid))
        x = grid_points(grid)[..., 0]
        np.testing.assert_allclose(lv.re, -np.pi**2 * np.cos(2 * np.pi * x), atol=1e-12)

    def test_one_sided_gateaux_derivative_first_order(self, problem):
        p, rng = problem
        u = admissible_potential(p, rng)
        v = sample_field(random_trig(rng, p.grid.ndim, 3, 2), p.grid)
        op = assemble_gtilde(p, u)
        lv = linearized_apply(op, p.a, v).re
        errs = []
        for s in (1e-3, 5e-4):
            fd = (assemble_gtilde(p, u + v * s).log_det_ratio.re - op.log_det_ratio.re) / s
            errs.append(np.max(np.abs(fd - lv)))
        assert 1.7 < errs[0] / errs[1] < 2.3

    def test_trace_identity(self, problem):
        p, rng = problem
        for _ in range(5):
            u = admissible_potential(p, rng)
            op = assemble_gtilde(p, u)
            lu = linearized_apply(op, p.a, u).re
            trace = hm.trace_product(op.gtilde_inverse.entries, p.g.entries).real
            assert np.max(np.abs(lu - (p.n - trace))) <= 1e-9

    def test_degenerate_rejected(self):
        grid = PeriodicGrid.uniform(1, 8)
        p = ProblemData.flat(grid)
        op = assemble_gtilde(p, sample_field(cos1(0.2), grid))
        with pytest.raises(DegenerateMetric):
            linearized_apply(op, p.a, ScalarField.zeros(grid))
        with pytest.raises(DegenerateMetric):
            linearized_adjoint_apply(op, p.a, ScalarField.zeros(grid))


class TestAdjoint:
    def test_duality(self, problem):
        p, rng = problem
        op = assemble_gtilde(p, admissible_potential(p, rng))
        for _ in range(5):
            v = sample_field(random_trig(rng, p.grid.ndim, 4, 2), p.grid)
            w = sample_field(random_trig(rng, p.grid.ndim, 4, 2), p.grid)
            lv = linearized_apply(op, p.a, v).re
            lsw = linearized_adjoint_apply(op, p.a, w).re
            lhs, rhs = np.mean(lv * w.re), np.mean(v.re * lsw)
            scale = np.linalg.norm(lv) * np.linalg.norm(w.re) / p.grid.size
            assert abs(lhs - rhs) <= 1e-10 * scale

    def test_flat_self_adjoint(self):
        grid = PeriodicGrid.uniform(2, 8)
        p = ProblemData.flat(grid)
        op = assemble_gtilde(p, ScalarField.zeros(grid))
        w = sample_field(random_trig(np.random.default_rng(0), 4), grid)
        np.testing.assert_allclose(
            linearized_adjoint_apply(op, p.a, w).re, linearized_apply(op, p.a, w).re, atol=1e-12
        )

    @pytest.mark.parametrize("n,res,rtol", [(1, 64, 1e-8), (2, 32, 1e-3)])
    def test_unit_weight_direct_assembly(self, n, res, rtol):
        # The two paths differ only through the Nyquist content of the inverse
        # metric, which decays spectrally, so the grids here are well resolved.
        rng = np.random.default_rng(101)
        grid = PeriodicGrid.uniform(n, res)
        p = ProblemData(grid, smooth_metric(grid, rng, 0.1), OneFormField.zeros(grid), ScalarField.zeros(grid))
        op = assemble_gtilde(p, admissible_potential(p, rng, 0.01))
        got = linearized_adjoint_apply(op, p.a, ScalarField.constant(grid, 1.0)).re
        expected = np.zeros(grid.shape, dtype=complex)
        for i in range(n):
            for j in range(n):
                # gt^{i jbar} is the (j, i) entry of the matrix inverse
                coef = ScalarField(grid, op.gtilde_inverse.entries[..., j, i])
                expected += complex_derivative(complex_derivative(coef, i + 1), j + 1, "antiholomorphic").values
        assert np.max(np.abs(got - expected.real)) <= rtol * np.max(np.abs(got))

def test_problem_data_validation():
    grid = PeriodicGrid.uniform(1, 4)
    bad = HermitianField(grid, -np.ones(grid.shape + (1, 1)))
    with pytest.raises(ValueError, match="positive definite"):
        ProblemData(grid, bad, OneFormField.zeros(grid), ScalarField.zeros(grid))
    with pytest.raises(ValueError, match="real"):
        ProblemData(grid, HermitianField.identity(grid), OneFormField.zeros(grid), ScalarField(grid, np.ones(grid.shape)))
