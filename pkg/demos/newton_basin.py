"""
Certifying the Newton basin
============================

Before Newton runs, the solver checks h = L1F K ||F'(z0)^-1|| < 1/4 at the
hand-off point z0 = (x0, lambda(x0)). Far from a solution the certificate
fails and the driver returns to gradient projection with a smaller C.
"""

import numpy as np
from proxopt import ConstantsLedger, basin_check, run_combined, run_newton, sphere_quadratic
from proxopt import sphere_quadratic_constants
from proxopt.kkt import kkt_at

p = sphere_quadratic(spectrum=[1.0, 2.0, 4.0, 7.0], seed=2)
consts = sphere_quadratic_constants(p.A)
w, V = np.linalg.eigh(p.A)

# near the minimiser the certificate holds
x_near = V[:, 0] + 0.01 * V[:, 1]
x_near /= np.linalg.norm(x_near)
cert = basin_check(p.obj, p.c, kkt_at(p.obj, p.c, x_near), consts["L1F"])
print("near: h = %.4f  certified = %s  ball radius = %.2e" % (cert.h, cert.certified, cert.r))

# Newton with the frozen Jacobian halves the distance to the limit each step (or better)
z, tr = run_newton(p.obj, p.c, kkt_at(p.obj, p.c, x_near), eps=1e-13)
for row in tr:
    print(f"  k={row.k}  ||F||={row.F_norm:.2e}  residual={row.residual:.2e}")

# a random point is too far
x_far = p.c.sampler(np.random.default_rng(0))
cert = basin_check(p.obj, p.c, kkt_at(p.obj, p.c, x_far), consts["L1F"])
print("far:  h = %.4f  certified = %s" % (cert.h, cert.certified))

# forcing the hand-off there (C larger than any residual) triggers the fallback
ledger = ConstantsLedger(beta=0.5, **consts)
ledger.set("C", 50.0, "user")
res = run_combined(p.obj, p.c, x_far, ledger, eps=1e-10)
print("fallbacks:", res.fallbacks, " C:", res.C_initial, "->", res.C_final, " residual:", res.residual)
print("verdict:", res.verdict)
