"""Lagrangian first-order system ``F(z) = [f' + g'^T lam; g]`` and its derivative."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .manifold import COND_TOL, ConstraintMap, _gram_factor, tangent_project


@dataclass(frozen=True)
class ObjectiveMap:
    """Twice differentiable objective with its Lipschitz constants.

    ``L0`` bounds ``||f'||`` on (a neighbourhood of) the constraint set and
    ``L1`` is the Lipschitz constant of ``f'``. ``lipschitz_source`` records
    where they came from (``"user"``, ``"closed_form"`` or ``"sampled"``).
    """

    eval_f: Callable[[np.ndarray], float]
    eval_grad: Callable[[np.ndarray], np.ndarray]
    eval_hess: Callable[[np.ndarray], np.ndarray]
    L0: float
    L1: float
    lipschitz_source: str = "user"
    name: str = "objective"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.L0 > 0 and self.L1 > 0):
            raise ValueError("Lipschitz constants L0, L1 must be positive")

    def f(self, x):
        return float(self.eval_f(x))

    def grad(self, x):
        return np.asarray(self.eval_grad(x), dtype=float)

    def hess(self, x):
        return np.atleast_2d(np.asarray(self.eval_hess(x), dtype=float))

    def scaled(self, t):
        """The objective ``t f`` (``t > 0``)."""
        return ObjectiveMap(
            eval_f=lambda x: t * self.eval_f(x),
            eval_grad=lambda x: t * np.asarray(self.eval_grad(x)),
            eval_hess=lambda x: t * np.asarray(self.eval_hess(x)),
            L0=t * self.L0,
            L1=t * self.L1,
            lipschitz_source=self.lipschitz_source,
            name=f"{t:g}*{self.name}",
            params=dict(self.params),
        )


@dataclass(frozen=True)
class KktPoint:
    """Extended variable ``z = [x, lam]``."""

    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float).ravel())
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)).ravel())

    @property
    def z(self):
        return np.concatenate([self.x, self.lam])

    @classmethod
    def from_vector(cls, z, n):
        z = np.asarray(z, dtype=float)
        return cls(z[:n], z[n:])

    def check_dims(self, c: ConstraintMap):
        if self.x.shape != (c.n,) or self.lam.shape != (c.m,):
            raise ValueError(
                f"KktPoint dims ({self.x.size}, {self.lam.size}) do not match problem ({c.n}, {c.m})"
            )


def lambda_x(obj: ObjectiveMap, c: ConstraintMap, x, cond_tol=COND_TOL):
    """Least-squares multiplier ``-(g' g'^T)^{-1} g' f'`` at ``x``."""
    J = c.jacobian(x)
    fac = _gram_factor(J, cond_tol)
    return -scipy.linalg.cho_solve(fac, J @ obj.grad(x))


def eval_F(obj: ObjectiveMap, c: ConstraintMap, z: KktPoint):
    z.check_dims(c)
    J = c.jacobian(z.x)
    return np.concatenate([obj.grad(z.x) + J.T @ z.lam, c.g(z.x)])


def eval_F_prime(obj: ObjectiveMap, c: ConstraintMap, z: KktPoint):
    """Symmetric block matrix ``[[f'' + sum lam_i g_i'', g'^T], [g', 0]]``."""
    z.check_dims(c)
    J = c.jacobian(z.x)
    H = obj.hess(z.x) + np.tensordot(z.lam, c.hessians(z.x), axes=1)
    return np.block([[H, J.T], [J, np.zeros((c.m, c.m))]])


def stationarity_residual(obj: ObjectiveMap, c: ConstraintMap, x, cond_tol=COND_TOL):
    """``||P_{T_x} f'(x)||``, zero exactly at stationary points."""
    return float(np.linalg.norm(tangent_project(c, x, obj.grad(x), cond_tol)))


def kkt_at(obj: ObjectiveMap, c: ConstraintMap, x) -> KktPoint:
    """``[x, lambda_x]``."""
    return KktPoint(x, lambda_x(obj, c, x))


# ---------------------------------------------------------------- objectives


def quadratic_form(A, radius=1.0) -> ObjectiveMap:
    """``f(x) = (Ax, x)`` with constants valid on the sphere of given radius."""
    A = np.asarray(A, dtype=float)
    norm_A = np.linalg.norm(A, 2)
    return ObjectiveMap(
        eval_f=lambda x: float(x @ A @ x),
        eval_grad=lambda x: 2.0 * A @ x,
        eval_hess=lambda x: 2.0 * A,
        L0=2.0 * norm_A * radius,
        L1=2.0 * norm_A,
        lipschitz_source="closed_form",
        name="quadratic_form",
        params={"A": A},
    )


def trace_form(A, k) -> ObjectiveMap:
    """``f(X) = trace(X^T A X)`` on column-major flattened ``n x k`` matrices.

    ``L0`` is the largest value of ``||2AX||_F`` over frames ``X``, attained
    on the top-``k`` singular directions of ``A``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    svals = np.linalg.svd(A, compute_uv=False)
    H = np.kron(np.eye(k), 2.0 * A)

    def mat(x):
        return np.asarray(x, dtype=float).reshape((n, k), order="F")

    return ObjectiveMap(
        eval_f=lambda x: float(np.sum(mat(x) * (A @ mat(x)))),
        eval_grad=lambda x: (2.0 * A @ mat(x)).reshape(-1, order="F"),
        eval_hess=lambda x: H,
        L0=2.0 * float(np.sqrt(np.sum(svals[:k] ** 2))),
        L1=2.0 * float(svals[0]),
        lipschitz_source="closed_form",
        name="trace_form",
        params={"A": A, "k": k},
    )
