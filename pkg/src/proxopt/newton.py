"""Modified Newton phase on ``F(z) = 0`` with a frozen ``F'(z0)`` factorisation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    AmbiguousProjection,
    DivergenceDetected,
    MaxStepsExceeded,
    NoConvergence,
    RankDeficient,
    SingularJacobian,
)
from .kkt import KktPoint, ObjectiveMap, eval_F, eval_F_prime, stationarity_residual
from .manifold import COND_TOL, ConstraintMap
from .trace import IterationTrace, TraceRow

log = logging.getLogger(__name__)

RATE_SLACK = 0.1


class FrozenJacobian:
    """LU factorisation of ``F'(z0)``, computed once and reused for every solve."""

    def __init__(self, matrix, cond_tol=COND_TOL):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        cond = np.linalg.cond(matrix)
        if not np.isfinite(cond) or cond > cond_tol:
            raise SingularJacobian(f"F'(z0) condition number {cond:.3e} exceeds {cond_tol:g}")
        self.matrix = matrix
        self.cond = float(cond)
        self._lu = scipy.linalg.lu_factor(matrix)
        self.factorizations = 1
        self.solves = 0

    def solve(self, rhs):
        self.solves += 1
        return scipy.linalg.lu_solve(self._lu, np.asarray(rhs, dtype=float))


@dataclass(frozen=True)
class BasinCertificate:
    K: float
    inv_norm: float
    h: float
    t0: float
    r: float
    certified: bool
    L1F: float


def kantorovich_t0(h):
    """Smaller root of ``h t^2 - t + 1 = 0`` (``1`` at ``h = 0``, ``nan`` past ``1/4``)."""
    if h < 0:
        raise ValueError("h must be non-negative")
    if h > 0.25:
        return float("nan")
    # 2 / (1 + sqrt(1 - 4h)) == (1 - sqrt(1 - 4h)) / (2h) without cancellation
    return 2.0 / (1.0 + math.sqrt(1.0 - 4.0 * h))


def certificate_from_norms(K, inv_norm, L1F, basin_margin=0.0):
    h = L1F * K * inv_norm
    t0 = kantorovich_t0(h)
    return BasinCertificate(
        K=float(K),
        inv_norm=float(inv_norm),
        h=float(h),
        t0=t0,
        r=K * t0,
        certified=bool(h < 0.25 - basin_margin),
        L1F=float(L1F),
    )


def basin_check(obj: ObjectiveMap, c: ConstraintMap, z0: KktPoint, L1F, basin_margin=0.0, cond_tol=COND_TOL):
    """Kantorovich-type test ``L1F ||F'(z0)^{-1} F(z0)|| ||F'(z0)^{-1}|| < 1/4``."""
    Fp = eval_F_prime(obj, c, z0)
    frozen = FrozenJacobian(Fp, cond_tol)
    K = float(np.linalg.norm(frozen.solve(eval_F(obj, c, z0))))
    inv_norm = 1.0 / np.linalg.svd(Fp, compute_uv=False)[-1]
    return certificate_from_norms(K, inv_norm, L1F, basin_margin)


def newton_update(frozen: FrozenJacobian, z, F_value):
    """``z - F'(z0)^{-1} F(z)`` for raw vectors."""
    return np.asarray(z, dtype=float) - frozen.solve(F_value)


def modified_newton_step(frozen: FrozenJacobian, obj: ObjectiveMap, c: ConstraintMap, z: KktPoint) -> KktPoint:
    return KktPoint.from_vector(newton_update(frozen, z.z, eval_F(obj, c, z)), c.n)


def reprojected_residual(obj, c, x):
    """Stationarity residual at ``P_S(x)``; ``inf`` if the projection fails."""
    try:
        y = c.project(x)
        return stationarity_residual(obj, c, y)
    except (AmbiguousProjection, NoConvergence, RankDeficient):
        return float("inf")


def n2_bound(C, sigma0, beta, eps):
    """Modified-Newton step count ``ceil(log2(C sigma0 / (eps (1 - beta)))) + 1``."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not (C > 0 and sigma0 > 0 and eps > 0):
        raise ValueError("C, sigma0, eps must be positive")
    arg = C * sigma0 / (eps * (1.0 - beta))
    if arg <= 1.0:
        return 1
    return math.ceil(math.log2(arg)) + 1


def decay_factor(F_norms, floor=0.0):
    """Geometric-mean contraction of ``||F(z_k)||`` over the entries above ``floor``."""
    vals = [v for v in F_norms if v > floor]
    if len(vals) < 2 or vals[0] == 0:
        return 0.0
    return (vals[-1] / vals[0]) ** (1.0 / (len(vals) - 1))


def run_newton(
    obj: ObjectiveMap,
    c: ConstraintMap,
    z0: KktPoint,
    eps,
    max_steps=100,
    rate_slack=RATE_SLACK,
    cond_tol=COND_TOL,
    trace=None,
):
    """Modified Newton iterations from ``z0`` until ``||P_T f'|| <= eps``.

    The residual is evaluated at the reprojection of ``x_k`` onto ``S``, since
    Newton iterates need not be feasible; ``||F(z_k)||`` is logged as well.
    ``trace.meta`` receives the frozen-factorisation count and the measured
    contraction factor of ``||F(z_k)||``.
    """
    z0.check_dims(c)
    frozen = FrozenJacobian(eval_F_prime(obj, c, z0), cond_tol)
    if trace is None:
        trace = IterationTrace()
    z = z0
    F0 = float(np.linalg.norm(eval_F(obj, c, z0)))
    floor = 1e-13 * (1.0 + F0 + np.linalg.norm(z0.z))
    F_norms = []
    grew = 0
    prev_z = None
    k = 0
    while True:
        Fz = eval_F(obj, c, z)
        Fn = float(np.linalg.norm(Fz))
        res = reprojected_residual(obj, c, z.x)
        trace.append(
            TraceRow(
                k=k,
                phase="newton",
                f=obj.f(z.x),
                residual=res,
                step_len=None if prev_z is None else float(np.linalg.norm(z.z - prev_z)),
                F_norm=Fn,
                x=z.x.copy(),
                lam=z.lam.copy(),
            )
        )
        if F_norms and Fn > F_norms[-1] and Fn > floor:
            grew += 1
        else:
            grew = 0
        F_norms.append(Fn)
        if res <= eps:
            break
        if grew >= 2:
            raise DivergenceDetected(f"||F(z_k)|| grew on 2 consecutive steps (k={k})", trace=trace)
        if k >= max_steps:
            raise MaxStepsExceeded(f"modified Newton did not reach eps={eps:g} in {max_steps} steps", trace=trace, x=z.x)
        prev_z = z.z
        z = KktPoint.from_vector(newton_update(frozen, z.z, Fz), c.n)
        k += 1
    rate = decay_factor(F_norms, floor)
    trace.meta.update(
        factorizations=frozen.factorizations,
        solves=frozen.solves,
        newton_steps=k,
        rate_factor=rate,
        rate_ok=bool(rate <= 0.5 + rate_slack),
    )
    return z, trace
