"""
Error bounds on the sphere
===========================

For (Ax, x) on the sphere the tangent gradient bounds the distance to the
eigenvectors: ||P_T f'(x)|| >= mu rho(x, Omega) with mu the smallest gap.
Sampling confirms it, and shows how loose the bound is in high dimension.
"""

import numpy as np
from proxopt import ConstantsLedger, inverse_bound_check, sphere_quadratic, sphere_quadratic_constants
from proxopt import sphere_quadratic_mu, stationary_points_sphere_quadratic, step_size_bounds
from proxopt import verify_geb, verify_teb

for spectrum in ([1.0, 2.0], [1.0, 2.0, 4.0], list(np.arange(1.0, 11.0))):
    p = sphere_quadratic(spectrum=spectrum, seed=0)
    omega = stationary_points_sphere_quadratic(p.A)
    rep = verify_teb(p.obj, p.c, omega, 10_000, seed=1)
    print(f"n={len(spectrum):2d}  mu={sphere_quadratic_mu(p.A):.3f}  sampled min ratio={rep.mu_hat:.3f}")

# uniform samples in 10-D rarely land on the great circles where the
# ratio is smallest, hence the gap between mu and the sampled minimum

# the gradient mapping inherits a bound nu = 1 / (1 + L1 gamma + gamma)
gamma_max, _ = step_size_bounds(p.obj.L0, p.obj.L1, p.c.R)
grid = gamma_max * np.arange(1, 11) / 11
geb = verify_geb(p.obj, p.c, omega, grid, 2000, mu=1.0, seed=2)
print("gradient mapping: nu_hat = %.4f  floor = %.4f  ok = %s" % (geb.nu_hat, geb.floor, geb.ok))

# ||F'(x, lambda(x))^-1|| stays below sigma0 / (1 - beta) near Omega
consts = sphere_quadratic_constants(p.A)
for beta in (0.25, 0.5, 0.9):
    led = ConstantsLedger(sigma0=consts["sigma0"], L1Fx=consts["L1Fx"], beta=beta)
    ib = inverse_bound_check(p.obj, p.c, omega, led, 1000, seed=3)
    print(f"beta={beta}: radius {ib.radius:.4f}, worst ratio to bound {ib.max_ratio:.3f}")
