import numpy as np
import pytest

from gradma.torus import PeriodicGrid, ScalarField, TrigExpression, TrigTerm

ACCEPTANCE_LINES: list[str] = []


def random_trig(rng, ndim, n_terms=4, kmax=2, amp=1.0):
    terms = []
    for _ in range(n_terms):
        k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, size=ndim))
        terms.append(TrigTerm(amp * rng.uniform(-1, 1), k, str(rng.choice(["cos", "sin"]))))
    return TrigExpression(terms)


def fd_partial(expr, points, axis, h=1e-3):
    """Fourth-order central difference of a TrigExpression along a real axis."""
    e = np.zeros(points.shape[-1])
    e[axis] = h
    f = expr.evaluate
    return (-f(points + 2 * e) + 8 * f(points + e) - 8 * f(points - e) + f(points - 2 * e)) / (12 * h)


def grid_points(grid):
    mesh = np.meshgrid(*[grid.axis_coords(a) for a in range(grid.ndim)], indexing="ij")
    return np.stack(mesh, axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def accept():
    def record(number, passed, detail):
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
