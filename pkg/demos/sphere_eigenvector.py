"""
Smallest eigenvector as a sphere-constrained problem
=====================================================

Minimise (Ax, x) over the unit sphere. Gradient projection brings the
iterate close, then a frozen-Jacobian Newton method finishes the job.
"""

import numpy as np
from proxopt import ConstantsLedger, ProblemHints, estimate_ledger, run_combined
from proxopt import sphere_quadratic, sphere_quadratic_constants

# a random rotation of diag(1, ..., 10)
p = sphere_quadratic(spectrum=np.arange(1.0, 11.0), seed=0)

# every constant the solver needs has a closed form here
consts = sphere_quadratic_constants(p.A)
ledger = estimate_ledger(p.obj, p.c, ProblemHints(required=()), ConstantsLedger(beta=0.5, **consts))

x0 = p.c.sampler(np.random.default_rng(1))
res = run_combined(p.obj, p.c, x0, ledger, eps=1e-12)

print("verdict     ", res.verdict)
print("gpa steps   ", res.n1_actual, "of at most", res.n1_bound)
print("newton steps", res.n2_actual, "of at most", res.n2_bound)
print("residual    ", res.residual)

# compare with LAPACK
w, V = np.linalg.eigh(p.A)
print("f(x)        ", p.obj.f(res.x), "vs", w[0])
print("|<x, v1>|   ", abs(res.x @ V[:, 0]))

# the residual climbs once while the iterate slides past a saddle,
# then decays linearly; Newton takes over below C
for row in res.trace:
    if row.phase == "newton" or row.k % 20 == 0:
        print(f"{row.phase:6s} k={row.k:3d}  residual={row.residual:.3e}")
