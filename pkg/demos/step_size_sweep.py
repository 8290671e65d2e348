"""
Choosing the gradient-projection step
======================================

The step gamma must stay below min(1/L1, R/L0). Inside that window the
worst-case step count N1(gamma) is smallest at gamma* = 1/(3 L1) when the
first term binds. The sweep compares the bound with what actually happens.
"""

import numpy as np
from proxopt import ConstantsLedger, compute_switch_constant, n1_bound, sphere_quadratic
from proxopt import sphere_quadratic_constants, step_size_bounds
from proxopt.cli import run_sweep, sweep_grid

p = sphere_quadratic(spectrum=np.arange(1.0, 11.0), seed=0)
gamma_max, gamma_star = step_size_bounds(p.obj.L0, p.obj.L1, p.c.R)
print("L0 =", p.obj.L0, " L1 =", p.obj.L1, " R =", p.c.R)
print("gamma_max =", gamma_max, " gamma* =", gamma_star)

C = compute_switch_constant(ConstantsLedger(beta=0.5, **sphere_quadratic_constants(p.A)))
x0 = p.c.sampler(np.random.default_rng(3))
delta_f = p.obj.f(x0) - 1.0  # f_min is the smallest eigenvalue

rows = run_sweep(p, x0, C, delta_f, sweep_grid(gamma_max, 10), max_steps=200_000)
print(f"{'gamma':>10s} {'actual':>8s} {'bound':>10s}")
for r in rows:
    print(f"{r['gamma']:10.5f} {r['n1_actual']:8d} {r['n1_bound']:10d}")

# the bound is a worst case; in practice larger steps still pay off
best = min(rows, key=lambda r: r["n1_bound"])
print("bound minimised at", best["gamma"], "(bound at gamma*:", n1_bound(delta_f, gamma_star, p.obj.L1, C), ")")
