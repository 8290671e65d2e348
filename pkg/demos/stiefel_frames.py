"""
Orthonormal frames
===================

On the Stiefel manifold {X : X^T X = I} the projection is the polar factor
and the trace objective tr(X^T A X) is minimised by any orthonormal basis
of the k lowest eigenvectors. Solutions come in orbits X Q, so the Newton
Jacobian is singular there and the solver finishes with gradient steps.
"""

import numpy as np
from proxopt import ConstantsLedger, ProblemHints, estimate_ledger, project_stiefel, run_combined
from proxopt import stiefel, stiefel_quadratic, tube_membership
from proxopt.errors import AmbiguousProjection
from proxopt.manifold import stiefel_mat, stiefel_vec

rng = np.random.default_rng(0)

# the polar factor keeps the singular vectors and drops the singular values
X = rng.standard_normal((6, 3))
P = project_stiefel(X)
print("||P^T P - I|| =", np.linalg.norm(P.T @ P - np.eye(3)))
print("singular values of X:", np.round(np.linalg.svd(X, compute_uv=False), 3))

# rank-deficient input has no unique nearest frame
try:
    project_stiefel(np.outer([1.0, 0, 0], [1.0, 0]))
except AmbiguousProjection as exc:
    print("ambiguous:", exc)

# the projection is only trusted within distance R = 1 of the manifold
c = stiefel(6, 3)
for scale in (1.3, 3.0):
    t = tube_membership(c, stiefel_vec(scale * P))
    print(f"{scale} * P: distance {t.distance:.3f}, {t.status.value}")

p = stiefel_quadratic(20, 3, spectrum=np.arange(1.0, 21.0), seed=1)

# C is a user choice here; the Lipschitz constant of F' is sampled
ledger = estimate_ledger(p.obj, p.c, ProblemHints(required=("L1F",), seed=1), ConstantsLedger(C=1e-2))
res = run_combined(p.obj, p.c, p.c.sampler(rng), ledger, eps=1e-8)
Xs = stiefel_mat(res.x, 20, 3)
print("f =", p.obj.f(res.x), "(optimum 1 + 2 + 3 = 6 unless stuck at a saddle)")
print("residual =", res.residual, " gpa steps =", res.n1_actual, " newton steps =", res.n2_actual)
print("eigenvalues of X^T A X:", np.round(np.linalg.eigvalsh(Xs.T @ p.A @ Xs), 6))
