"""Constraint sets ``S = {x : g(x) = 0}``, tangent projectors and metric projections.

Stiefel matrices are handled as column-major flattened vectors so that the
rest of the package only ever deals with points of ``R^n``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import AmbiguousProjection, NoConvergence, RankDeficient

log = logging.getLogger(__name__)

PROJ_TOL = 1e-8
FEAS_TOL = 1e-10
ORTHO_TOL = 1e-8
MAX_PROJ_ITERS = 50
COND_TOL = 1e12
TUBE_MARGIN = 1e-9


@dataclass(frozen=True)
class ConstraintMap:
    """Smooth equality constraint ``g : R^n -> R^m`` with its derivatives.

    Parameters
    ----------
    n, m : int
        Ambient dimension and number of constraints (``m < n``).
    eval_g : callable
        ``x -> (m,)`` constraint values.
    eval_jacobian : callable
        ``x -> (m, n)`` Jacobian, row ``i`` is ``g_i'(x)``.
    eval_hessians : callable
        ``x -> (m, n, n)`` stack of symmetric constraint Hessians.
    prox_radius : float
        Proximal smoothness constant ``R`` of ``S``.
    exact_projector : callable, optional
        Closed-form metric projection onto ``S``.
    distance : callable, optional
        Closed-form distance ``rho(x, S)``.
    sampler : callable, optional
        ``rng -> x`` drawing a random point of ``S``.
    """

    n: int
    m: int
    eval_g: Callable[[np.ndarray], np.ndarray]
    eval_jacobian: Callable[[np.ndarray], np.ndarray]
    eval_hessians: Callable[[np.ndarray], np.ndarray]
    prox_radius: float
    exact_projector: Optional[Callable[[np.ndarray], np.ndarray]] = None
    distance: Optional[Callable[[np.ndarray], float]] = None
    sampler: Optional[Callable[[np.random.Generator], np.ndarray]] = None
    name: str = "levelset"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise ValueError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        if not self.prox_radius > 0:
            raise ValueError("prox_radius must be positive")

    @property
    def R(self):
        return self.prox_radius

    def g(self, x):
        return np.atleast_1d(np.asarray(self.eval_g(x), dtype=float))

    def jacobian(self, x):
        return np.atleast_2d(np.asarray(self.eval_jacobian(x), dtype=float))

    def hessians(self, x):
        H = np.asarray(self.eval_hessians(x), dtype=float)
        return H.reshape(self.m, self.n, self.n)

    def project(self, x):
        """Metric projection onto ``S``: closed form if known, else iterative."""
        if self.exact_projector is not None:
            return self.exact_projector(np.asarray(x, dtype=float))
        return project_levelset(self, x)


def _gram_factor(J, cond_tol=COND_TOL):
    G = J @ J.T
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > cond_tol:
        raise RankDeficient("g'(x) g'(x)^T is numerically singular")
    return scipy.linalg.cho_factor(G)


def tangent_projector(c: ConstraintMap, x, cond_tol=COND_TOL):
    """Matrix ``I - g'^T (g' g'^T)^{-1} g'`` of the projection onto ``T_x``."""
    J = c.jacobian(x)
    fac = _gram_factor(J, cond_tol)
    return np.eye(c.n) - J.T @ scipy.linalg.cho_solve(fac, J)


def tangent_project(c: ConstraintMap, x, v, cond_tol=COND_TOL):
    """Project ``v`` onto the tangent subspace ``T_x = null(g'(x))``."""
    v = np.asarray(v, dtype=float)
    J = c.jacobian(x)
    fac = _gram_factor(J, cond_tol)
    return v - J.T @ scipy.linalg.cho_solve(fac, J @ v)


def project_sphere(x, radius=1.0, proj_tol=PROJ_TOL):
    """Nearest point of the origin-centred sphere of the given radius."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx <= proj_tol:
        raise AmbiguousProjection("every point of the sphere is nearest to the centre")
    return radius * x / nx


def project_stiefel(X, proj_tol=PROJ_TOL):
    """Nearest matrix with orthonormal columns, ``U I_{k,n} V^T`` from the SVD.

    The projection is unique exactly when all singular values of ``X`` are
    positive; a vanishing singular value puts ``X`` on the boundary of the
    unit tube where several nearest frames exist.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.min() <= proj_tol:
        raise AmbiguousProjection(
            f"smallest singular value {s.min():.3e} <= {proj_tol:g}; projection not unique"
        )
    return U @ Vt


def project_levelset(
    c: ConstraintMap,
    x,
    feas_tol=FEAS_TOL,
    ortho_tol=ORTHO_TOL,
    max_iters=MAX_PROJ_ITERS,
    cond_tol=COND_TOL,
):
    """Metric projection onto a generic level set by damped Newton on the
    nearest-point KKT system.

    Solves ``y - x + g'(y)^T nu = 0, g(y) = 0`` starting from ``y = x``,
    ``nu = 0``. The first step is the Gauss-Newton feasibility step; later
    steps use the full Lagrangian Hessian ``I + sum nu_i g_i''``. Steps are
    halved until the KKT residual decreases.
    """
    x = np.asarray(x, dtype=float)
    n, m = c.n, c.m
    y = x.copy()
    nu = np.zeros(m)

    def kkt_residual(y, nu):
        J = c.jacobian(y)
        return np.concatenate([y - x + J.T @ nu, c.g(y)]), J

    res, J = kkt_residual(y, nu)
    for it in range(max_iters):
        gval = res[n:]
        _gram_factor(J, cond_tol)
        tang = tangent_project(c, y, x - y, cond_tol)
        if (
            np.linalg.norm(gval) <= feas_tol
            and np.linalg.norm(tang) <= ortho_tol * max(1.0, np.linalg.norm(x - y))
        ):
            return y
        H = np.eye(n) + np.tensordot(nu, c.hessians(y), axes=1)
        K = np.block([[H, J.T], [J, np.zeros((m, m))]])
        try:
            step = np.linalg.solve(K, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(K, -res, rcond=None)[0]
        base = np.linalg.norm(res)
        t = 1.0
        while True:
            y_new, nu_new = y + t * step[:n], nu + t * step[n:]
            res_new, J_new = kkt_residual(y_new, nu_new)
            if np.linalg.norm(res_new) < base or t < 1e-10:
                break
            t *= 0.5
        y, nu, res, J = y_new, nu_new, res_new, J_new
    raise NoConvergence(f"level-set projection did not converge in {max_iters} iterations")


class TubeStatus(str, enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class TubeMembership:
    status: TubeStatus
    distance: float
    estimated: bool


def tube_membership(c: ConstraintMap, x, tube_margin=TUBE_MARGIN) -> TubeMembership:
    """Classify ``x`` against the Chebyshev layer ``rho(x, S) < R``.

    Points of ``S`` itself count as inside. Without a closed-form distance the
    distance is measured to the iterative projection and flagged estimated.
    """
    x = np.asarray(x, dtype=float)
    estimated = c.distance is None
    if estimated:
        try:
            rho = float(np.linalg.norm(x - project_levelset(c, x)))
        except (NoConvergence, RankDeficient):
            return TubeMembership(TubeStatus.OUTSIDE, float("nan"), True)
    else:
        rho = float(c.distance(x))
    R = c.prox_radius
    if rho < R - tube_margin:
        status = TubeStatus.INSIDE
    elif rho <= R + tube_margin:
        status = TubeStatus.BOUNDARY
    else:
        status = TubeStatus.OUTSIDE
    return TubeMembership(status, rho, estimated)


def prox_radius_scalar(ell, lipschitz_g):
    """Proximal smoothness constant ``ell / L_g`` of a single-equation level set
    whose gradient norm is at least ``ell`` on ``S``."""
    return ell / lipschitz_g


# ---------------------------------------------------------------- factories


def sphere(n, radius=1.0) -> ConstraintMap:
    """Sphere ``||x||^2 - radius^2 = 0`` in ``R^n`` (``R = radius``)."""
    radius = float(radius)

    def sample(rng):
        v = rng.standard_normal(n)
        return radius * v / np.linalg.norm(v)

    return ConstraintMap(
        n=n,
        m=1,
        eval_g=lambda x: np.array([x @ x - radius**2]),
        eval_jacobian=lambda x: 2.0 * np.asarray(x, dtype=float)[None, :],
        eval_hessians=lambda x: 2.0 * np.eye(n)[None, :, :],
        prox_radius=radius,
        exact_projector=lambda x: project_sphere(x, radius),
        distance=lambda x: abs(np.linalg.norm(x) - radius),
        sampler=sample,
        name="sphere",
        params={"radius": radius},
    )


def stiefel_vec(X):
    """Column-major flattening of an ``n x k`` matrix."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def stiefel_mat(x, n, k):
    return np.asarray(x, dtype=float).reshape((n, k), order="F")


def stiefel(n, k) -> ConstraintMap:
    """Stiefel manifold ``X^T X = I_k`` as a level set in ``R^{nk}``.

    The ``k(k+1)/2`` constraints are the upper triangle (row-major order,
    diagonal included) of ``X^T X - I_k``.
    """
    iu, ju = np.triu_indices(k)
    m = len(iu)
    N = n * k

    hess = np.zeros((m, N, N))
    for r, (i, j) in enumerate(zip(iu, ju)):
        if i == j:
            hess[r, i * n:(i + 1) * n, i * n:(i + 1) * n] = 2.0 * np.eye(n)
        else:
            hess[r, i * n:(i + 1) * n, j * n:(j + 1) * n] = np.eye(n)
            hess[r, j * n:(j + 1) * n, i * n:(i + 1) * n] = np.eye(n)
    hess.setflags(write=False)

    def g(x):
        X = stiefel_mat(x, n, k)
        return (X.T @ X - np.eye(k))[iu, ju]

    def jac(x):
        X = stiefel_mat(x, n, k)
        J = np.zeros((m, N))
        for r, (i, j) in enumerate(zip(iu, ju)):
            if i == j:
                J[r, i * n:(i + 1) * n] = 2.0 * X[:, i]
            else:
                J[r, i * n:(i + 1) * n] = X[:, j]
                J[r, j * n:(j + 1) * n] = X[:, i]
        return J

    def proj(x):
        return stiefel_vec(project_stiefel(stiefel_mat(x, n, k)))

    def dist(x):
        s = np.linalg.svd(stiefel_mat(x, n, k), compute_uv=False)
        return float(np.linalg.norm(s - 1.0))

    def sample(rng):
        Q, Rm = np.linalg.qr(rng.standard_normal((n, k)))
        return stiefel_vec(Q * np.sign(np.diag(Rm)))

    return ConstraintMap(
        n=N,
        m=m,
        eval_g=g,
        eval_jacobian=jac,
        eval_hessians=lambda x: hess,
        prox_radius=1.0,
        exact_projector=proj,
        distance=dist,
        sampler=sample,
        name="stiefel",
        params={"n": n, "k": k},
    )


def levelset(n, m, eval_g, eval_jacobian, eval_hessians, prox_radius, **kwargs) -> ConstraintMap:
    """User-supplied level set; projections go through :func:`project_levelset`."""
    return ConstraintMap(
        n=n,
        m=m,
        eval_g=eval_g,
        eval_jacobian=eval_jacobian,
        eval_hessians=eval_hessians,
        prox_radius=prox_radius,
        name=kwargs.pop("name", "levelset"),
        **kwargs,
    )


def constraint_from_name(spec: str, n=None) -> ConstraintMap:
    """Parse ``"sphere(radius)"`` (ambient ``n`` passed separately) or
    ``"stiefel(n, k)"`` into a constraint.

    ``levelset`` constraints need evaluators and are only built programmatically.
    """
    spec = spec.strip()
    name, _, rest = spec.partition("(")
    args = [a for a in rest.rstrip(")").split(",") if a.strip()]
    name = name.strip()
    if name == "sphere":
        if n is None:
            raise ValueError("sphere(radius) needs the ambient dimension n")
        return sphere(int(n), float(args[0]) if args else 1.0)
    if name == "stiefel":
        return stiefel(int(args[0]), int(args[1]))
    if name == "levelset":
        raise ValueError("levelset constraints must be constructed with levelset(...)")
    raise ValueError(f"unknown constraint {spec!r}")
