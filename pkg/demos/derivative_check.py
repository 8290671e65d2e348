"""
Checking user derivatives
==========================

Every bound the solver relies on assumes the supplied gradients and
Hessians are right. Central differences catch a wrong entry quickly.
"""

import numpy as np
from proxopt import ObjectiveMap, fd_consistency, sphere_quadratic
from proxopt.errors import DerivativeMismatch

p = sphere_quadratic(spectrum=[1.0, 3.0, 5.0], seed=4)
rep = fd_consistency(p.obj, p.c, n_probes=5, seed=0)
print("clean model ok:", rep.ok)
for name, err in rep.max_rel_error.items():
    print(f"  {name:10s} max relative error {err:.1e}")

# a Hessian that forgot a factor of two
bad = ObjectiveMap(p.obj.eval_f, p.obj.eval_grad, lambda x: p.A, p.obj.L0, p.obj.L1)
try:
    fd_consistency(bad, p.c, seed=0)
except DerivativeMismatch as exc:
    print("caught:", exc.evaluator, "-", exc)

# the same check without raising, e.g. for a report
rep = fd_consistency(bad, p.c, seed=0, raise_on_fail=False)
print("report:", rep.ok, rep.failure)
