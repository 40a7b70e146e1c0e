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

# # Solving the equation and checking the answer
# We look for a potential `u` and a constant `b` with
# `log det(g + a u_jbar + abar u_i + u_{i jbar}) - log det g = F + b`.
# The continuation runs `t` from 0 to 1 and applies Newton-Krylov at each step.

# +
import numpy as np

from gradma import ProblemData, continuity_solve, assemble_gtilde
from gradma.torus import OneFormField, PeriodicGrid, TrigExpression, TrigTerm, sample_field

grid = PeriodicGrid.uniform(1, 64)
a = OneFormField.constant(grid, [0.2 + 0.1j])
# -

# ## A manufactured solution
# Pick a truth `u*`, build `F` from it, and solve. The solver should return
# `u* - sup u*` with `b = 0`.

truth = sample_field(TrigExpression([TrigTerm(0.05, (1, 0), "cos"), TrigTerm(0.02, (1, 1), "sin")]), grid)
base = ProblemData.flat(grid, a=a)
F = assemble_gtilde(base, truth).log_det_ratio
sol = continuity_solve(base.with_source(F))
print("sup error:", np.max(np.abs(sol.u.re - (truth.re - truth.re.max()))))
print("b:", sol.b, " final residual:", sol.residual_norm)

# The trace records every Newton iterate. At `t = 1` the residual drops
# quadratically.

for rec in sol.trace:
    if rec.t == 1.0:
        print(rec.line())

# ## A general source
# With an arbitrary `F` the constant `b` is unknown ahead of time, but
# it must satisfy `|b| <= sup |F|`.

F = sample_field(TrigExpression([TrigTerm(0.8, (1, 0), "cos"), TrigTerm(0.4, (1, 2), "sin")]), grid)
sol = continuity_solve(base.with_source(F))
print(f"b = {sol.b:.12f}, sup|F| = {np.max(np.abs(F.re)):.3f}, steps = {len(sol.states) - 1}")
