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

# # Monitors
# The a-priori estimates bound `sup|u|` and the ratio of the Hessian norm
# to `1 + sup|du|^2`. We cannot check constants we do not know. We can check
# that these numbers settle down under grid refinement.

# +
import numpy as np

from gradma import ProblemData, SolverConfig, continuity_solve, assemble_gtilde
from gradma.monitors import aeppli_defect, estimate_report, uniqueness_probe
from gradma.solver import kernel_density
from gradma.torus import OneFormField, PeriodicGrid, TrigExpression, TrigTerm, sample_field

expr = TrigExpression([TrigTerm(0.6, (1, 0), "cos"), TrigTerm(0.3, (1, 1), "sin")])
cfg = SolverConfig(newton_tol=1e-10)
for res in (32, 64, 128):
    grid = PeriodicGrid.uniform(1, res)
    p = ProblemData.flat(grid, a=OneFormField.constant(grid, [0.2 + 0.1j]), F=sample_field(expr, grid))
    rep = estimate_report(p, continuity_solve(p, cfg))
    print(f"res {res:4d}: sup|u| = {rep.sup_abs_u:.6f}  c2_ratio = {rep.c2_ratio:.6f}  lambda1_max = {rep.lambda1_max:.4f}")
# -

# ## Aeppli class
# When `a` is holomorphic (constant on a torus), the perturbed metric differs from
# `g` by `d(gamma bar) + dbar(gamma)` with `gamma = -i (u a + du / 2)`.

sol = continuity_solve(p, cfg)
print("Aeppli defect:", aeppli_defect(p, sol))

# ## Kernel of the adjoint
# The adjoint linearized operator has a one-dimensional kernel spanned by a
# positive density. That density is what pins down `b`.

op = assemble_gtilde(p, sol.u)
w = kernel_density(op, p.a)
print(f"mean w = {w.re.mean():.12f}, min w = {w.re.min():.4f}, max w = {w.re.max():.4f}")

# ## Uniqueness
# We re-solve with other step schedules and from perturbed warm starts,
# and every run lands on the same `(u, b)`.

report = uniqueness_probe(p, cfg, trials=2, primary=sol)
print(report.to_dict())
