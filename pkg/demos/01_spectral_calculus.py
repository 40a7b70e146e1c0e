# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
#       jupytext_version: 1.16.3
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Spectral calculus on a flat torus
# Fields live on a uniform grid over the torus with period 1 in every real
# direction. The real axes are ordered `(x_1, y_1, ..., x_n, y_n)`.

# +
import numpy as np

from gradma.torus import (
    PeriodicGrid,
    TrigExpression,
    TrigTerm,
    complex_derivative,
    complex_hessian,
    sample_field,
)

grid = PeriodicGrid.uniform(1, 32)
grid
# -

# A trigonometric expression is a sum of `amp * cos/sin(2 pi k.x)` terms.
# Sampling refuses wavevectors the grid cannot resolve.

expr = TrigExpression([TrigTerm(0.5, (1, 0), "cos"), TrigTerm(0.25, (0, 2), "sin")])
u = sample_field(expr, grid)
u.re.shape, float(u.re.max())

# The holomorphic derivative is `(d_x - i d_y) / 2`. For `cos(2 pi x)` it is
# `-pi sin(2 pi x)`, with no imaginary part.

du = complex_derivative(u, 1)
x = grid.coords()[0]
y = grid.coords()[1]
exact = -0.5 * np.pi * np.sin(2 * np.pi * x) - 0.5j * np.pi * np.cos(4 * np.pi * y)
print("max error of du:", np.max(np.abs(du.values - exact)))

# The complex Hessian `u_{i jbar}` equals a quarter of the real Laplacian when `n = 1`.

hess = complex_hessian(u)
lap = -0.5 * (2 * np.pi) ** 2 * np.cos(2 * np.pi * x) - 0.25 * (4 * np.pi) ** 2 * np.sin(4 * np.pi * y)
print("max error of u_{1 1bar}:", np.max(np.abs(hess.entries[..., 0, 0] - lap / 4)))

# ## Field files
# Fields persist in a small binary format: a text header followed by
# little-endian doubles. Reading a file gives back the exact same bits.

# +
import tempfile
from pathlib import Path

from gradma.fieldio import read_field, write_field

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "u.gmaf"
    write_field(path, u)
    print(path.read_bytes()[:20])
    back = read_field(path)
    print("bit-identical:", np.array_equal(back.re, u.re))
# -
