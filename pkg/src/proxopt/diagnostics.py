"""Checks of the structural conditions behind the convergence guarantees.

Covers the tangent and gradient error bounds, nondegeneracy of stationary
points, the inverse-norm estimate near stationary points, finite-difference
checks of user derivatives, and closed-form oracles for quadratic forms on
the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrum, DerivativeMismatch, IncompleteLedger, NoSampler
from .gpa import gradient_mapping, step_size_bounds
from .kkt import (
    KktPoint,
    ObjectiveMap,
    eval_F,
    eval_F_prime,
    kkt_at,
    lambda_x,
    quadratic_form,
    stationarity_residual,
)
from .manifold import ConstraintMap, sphere, tangent_project

RHO_FLOOR = 1e-8
EIG_TOL = 1e-8
FD_STEP = 1e-5
FD_RTOL = 1e-5


@dataclass
class StationarySet:
    points: list
    multipliers: list
    sigma_values: list
    complete: bool

    def __len__(self):
        return len(self.points)

    def distance(self, x):
        """``rho(x, Omega)`` over the enumerated points."""
        return float(min(np.linalg.norm(np.asarray(x) - p) for p in self.points))

    def nearest(self, x):
        d = [np.linalg.norm(np.asarray(x) - p) for p in self.points]
        return int(np.argmin(d))

    def min_pairwise_distance(self):
        P = np.array(self.points)
        D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
        return float(D[~np.eye(len(P), dtype=bool)].min())


@dataclass
class FrameOrbitSet(StationarySet):
    """Stationary set made of whole orbits ``{V Q : Q in O(k)}`` of frames.

    ``points`` holds one flattened representative ``V`` per orbit; distances
    use ``min_Q ||X - V Q||_F^2 = 2k - 2 ||V^T X||_*``.
    """

    n: int = 0
    k: int = 0

    def _mat(self, x):
        return np.asarray(x, dtype=float).reshape((self.n, self.k), order="F")

    def _orbit_dists(self, x):
        X = self._mat(x)
        out = []
        for p in self.points:
            nuc = np.linalg.svd(self._mat(p).T @ X, compute_uv=False).sum()
            out.append(math.sqrt(max(2.0 * self.k - 2.0 * nuc, 0.0)))
        return out

    def distance(self, x):
        return float(min(self._orbit_dists(x)))

    def nearest(self, x):
        return int(np.argmin(self._orbit_dists(x)))

    def min_pairwise_distance(self):
        return float(min(
            d for i, p in enumerate(self.points) for j, d in enumerate(self._orbit_dists(p)) if i != j
        ))


def _sigma_min(obj, c, x, lam):
    return float(np.linalg.svd(eval_F_prime(obj, c, KktPoint(x, lam)), compute_uv=False)[-1])


def stationary_set_from_points(obj, c, points, complete) -> StationarySet:
    points = [np.asarray(p, dtype=float) for p in points]
    mults = [lambda_x(obj, c, p) for p in points]
    sig = [_sigma_min(obj, c, p, lam) for p, lam in zip(points, mults)]
    return StationarySet(points, mults, sig, complete)


def _spectrum(A):
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise ValueError("A must be symmetric")
    return np.linalg.eigh(A)


def sphere_quadratic_mu(A, eig_tol=EIG_TOL):
    """Smallest gap between eigenvalues of ``A``: the tangent error bound
    constant of ``(Ax, x)`` on the unit sphere."""
    w, _ = _spectrum(A)
    gap = float(np.min(np.diff(w)))
    if gap <= eig_tol:
        raise DegenerateSpectrum(f"eigenvalue gap {gap:.3e} <= {eig_tol:g}")
    return gap


def stationary_points_sphere_quadratic(A, eig_tol=EIG_TOL, check_gap=True) -> StationarySet:
    """All ``2n`` stationary points ``+-v_i`` of ``(Ax, x)`` on the unit sphere.

    With ``check_gap=False`` a repeated spectrum is accepted; the returned set
    then lists only the eigenvector basis and is marked incomplete.
    """
    w, V = _spectrum(A)
    n = len(w)
    complete = True
    gap = float(np.min(np.diff(w)))
    if gap <= eig_tol:
        if check_gap:
            raise DegenerateSpectrum(f"eigenvalue gap {gap:.3e} <= {eig_tol:g}")
        complete = False
    obj, c = quadratic_form(A), sphere(n)
    points = []
    for j in range(n):
        points.extend([V[:, j].copy(), -V[:, j]])
    return stationary_set_from_points(obj, c, points, complete)


def stationary_set_stiefel_quadratic(A, k, eig_tol=EIG_TOL) -> FrameOrbitSet:
    """Stationary set of ``trace(X^T A X)`` on ``S_{n,k}``: the frames spanning
    an invariant subspace, one orbit per ``k``-subset of eigenvectors.

    Every such point is degenerate (the orbit is a continuum), so
    ``sigma_values`` are numerically zero.
    """
    from itertools import combinations

    from .kkt import trace_form
    from .manifold import stiefel, stiefel_vec

    w, V = _spectrum(A)
    n = len(w)
    if float(np.min(np.diff(w))) <= eig_tol:
        raise DegenerateSpectrum("eigenvalues must be distinct")
    obj, c = trace_form(A, k), stiefel(n, k)
    points = [stiefel_vec(V[:, list(idx)]) for idx in combinations(range(n), k)]
    mults = [lambda_x(obj, c, p) for p in points]
    sig = [_sigma_min(obj, c, p, lam) for p, lam in zip(points, mults)]
    return FrameOrbitSet(points, mults, sig, True, n=n, k=k)


def sphere_quadratic_constants(A):
    """Closed-form constants for ``f(x) = (Ax, x)`` on the unit sphere.

    With ``q(x) = (Ax, x)`` the multiplier is ``lambda_x = -q(x)``, whose
    Lipschitz constant on the sphere is the spectral spread ``s``. ``F'`` is
    affine in ``z`` with linear part ``[[2 dlam I, 2 dx], [2 dx^T, 0]]`` of
    norm at most ``4/sqrt(3)`` per unit ``dz``, and ``x -> F'(x, lambda_x)``
    is Lipschitz with constant ``s + sqrt(s^2 + 4)``.
    """
    w, _ = _spectrum(A)
    mu = sphere_quadratic_mu(A)
    spread = float(w[-1] - w[0])
    L1 = 2.0 * float(np.max(np.abs(w)))
    return {
        "mu": mu,
        "sigma0": 1.0 / (2.0 * min(1.0, mu)),
        "L1F": 4.0 / math.sqrt(3.0),
        "L1Fx": spread + math.sqrt(spread**2 + 4.0),
        "L_lambda": spread,
        "d": math.sqrt(2.0) / 2.0,
        "f_min": float(w[0]),
        "L0": L1,
        "L1": L1,
        "R": 1.0,
    }


def _sampler(c, sampler):
    s = sampler if sampler is not None else c.sampler
    if s is None:
        raise NoSampler(f"no feasible-point sampler for constraint {c.name!r}")
    return s


def _require_complete(omega):
    if not omega.complete:
        raise ValueError("the stationary set must be complete for distance-based checks")


@dataclass
class TebReport:
    mu_hat: float
    worst_point: np.ndarray
    n_used: int
    vacuous: bool = False


def verify_teb(obj, c, omega: StationarySet, n_samples, seed=0, sampler=None, rho_floor=RHO_FLOOR) -> TebReport:
    """Sampled minimum of ``||P_T f'(x)|| / rho(x, Omega)`` over ``S``.

    If every sample is itself stationary the set cannot be a finite
    enumeration and the report is marked vacuous.
    """
    draw = _sampler(c, sampler)
    _require_complete(omega)
    rng = np.random.default_rng(seed)
    best, worst, used, stationary = math.inf, None, 0, 0
    for _ in range(n_samples):
        x = draw(rng)
        res = stationarity_residual(obj, c, x)
        if res <= rho_floor:
            stationary += 1
        rho = omega.distance(x)
        if rho < rho_floor:
            continue
        used += 1
        ratio = res / rho
        if ratio < best:
            best, worst = ratio, x
    if stationary == n_samples:
        return TebReport(float("nan"), None, 0, vacuous=True)
    return TebReport(float(best), worst, used)


@dataclass
class GebReport:
    nu_hat: float
    floor: float
    ok: bool
    worst_point: np.ndarray = None
    worst_gamma: float = None
    gamma0: float = None


def verify_geb(obj, c, omega, gamma_grid, n_samples, mu=None, seed=0, sampler=None,
               rho_floor=RHO_FLOOR, geb_slack=1e-6) -> GebReport:
    """Sampled minimum of ``||g_gamma(x)|| / rho(x, Omega)`` over ``S`` and a
    grid of step sizes in ``(0, gamma0)``.

    When ``mu`` (the tangent error bound constant) is known, the result is
    compared with the implied floor ``mu / (1 + L1 gamma0 + mu gamma0)``.
    """
    draw = _sampler(c, sampler)
    _require_complete(omega)
    gamma0, _ = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
    grid = np.asarray(gamma_grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid >= gamma0):
        raise ValueError(f"gamma grid must lie in (0, {gamma0:g})")
    rng = np.random.default_rng(seed)
    best, worst, worst_g = math.inf, None, None
    for _ in range(n_samples):
        x = draw(rng)
        rho = omega.distance(x)
        if rho < rho_floor:
            continue
        for g in grid:
            ratio = np.linalg.norm(gradient_mapping(obj, c, x, g)) / rho
            if ratio < best:
                best, worst, worst_g = ratio, x, float(g)
    floor = float("nan") if mu is None else mu / (1.0 + obj.L1 * gamma0 + mu * gamma0)
    ok = True if mu is None else bool(best >= floor - geb_slack)
    return GebReport(float(best), floor, ok, worst, worst_g, gamma0)


def nondegeneracy_check(obj, c, omega: StationarySet, eig_tol=EIG_TOL):
    """``sigma0 = max ||F'(x*, lambda_x*)^{-1}||`` over the stationary set.

    Returns ``(sigma0, report)``; ``sigma0`` is ``inf`` when some point is
    degenerate (smallest singular value at most ``eig_tol``).
    """
    report = []
    for i, x in enumerate(omega.points):
        lam = lambda_x(obj, c, x)
        smin = _sigma_min(obj, c, x, lam)
        report.append({"index": i, "sigma_min": smin, "degenerate": bool(smin <= eig_tol)})
    smallest = min(r["sigma_min"] for r in report)
    sigma0 = math.inf if smallest <= eig_tol else 1.0 / smallest
    return sigma0, report


@dataclass
class InverseBoundReport:
    beta: float
    radius: float
    bound: float
    max_ratio: float
    violations: int
    n_checked: int
    worst_point: np.ndarray = field(default=None, repr=False)

    @property
    def ok(self):
        return self.violations == 0


def inverse_bound_check(obj, c, omega: StationarySet, ledger, n_samples, seed=0) -> InverseBoundReport:
    """Sample ``x`` with ``rho(x, Omega) <= beta / (sigma0 L1Fx)`` and check
    ``||F'(x, lambda_x)^{-1}|| <= sigma0 / (1 - beta)``.

    ``max_ratio`` is the largest observed ``||F'^{-1}|| / (sigma0 / (1 - beta))``.
    """
    missing = [k for k in ("sigma0", "L1Fx", "beta") if getattr(ledger, k, None) is None]
    if missing:
        raise IncompleteLedger(f"missing ledger fields {missing}", missing)
    _require_complete(omega)
    sigma0, L1Fx, beta = ledger.sigma0, ledger.L1Fx, ledger.beta
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    radius = beta / (sigma0 * L1Fx)
    bound = sigma0 / (1.0 - beta)
    rng = np.random.default_rng(seed)
    max_ratio, violations, checked, worst = 0.0, 0, 0, None

    def check(x):
        nonlocal max_ratio, violations, checked, worst
        smin = _sigma_min(obj, c, x, lambda_x(obj, c, x))
        ratio = (1.0 / smin) / bound
        checked += 1
        if ratio > max_ratio:
            max_ratio, worst = ratio, x
        if ratio > 1.0 + 1e-6:
            violations += 1

    for p in omega.points:
        check(p)
    if radius > 0:
        for _ in range(n_samples):
            p = omega.points[rng.integers(len(omega))]
            v = tangent_project(c, p, rng.standard_normal(c.n))
            v /= np.linalg.norm(v)
            x = c.project(p + radius * rng.uniform() * v)
            if omega.distance(x) <= radius:
                check(x)
    return InverseBoundReport(beta, radius, bound, max_ratio, violations, checked, worst)


# ---------------------------------------------------------------- finite differences


def _fd_jacobian(fun, x, h):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fun(x + e), dtype=float) - np.asarray(fun(x - e), dtype=float)) / (2 * step))
    return np.stack(cols, axis=-1)


def _rel_err(fd, an):
    scale = max(np.linalg.norm(an), np.linalg.norm(fd), 1e-8)
    return float(np.linalg.norm(fd - an) / scale)


@dataclass
class FdReport:
    max_rel_error: dict
    ok: bool
    failure: dict = None


def fd_consistency(obj: ObjectiveMap, c: ConstraintMap, n_probes=5, seed=0, h=FD_STEP, rtol=FD_RTOL,
                   raise_on_fail=True) -> FdReport:
    """Central-difference checks of ``f'``, ``f''``, ``g'``, ``g_i''`` and ``F'``.

    Probes are random points near ``S`` (or Gaussian points without a
    sampler). Raises :class:`DerivativeMismatch` naming the first failing
    evaluator unless ``raise_on_fail`` is false.
    """
    rng = np.random.default_rng(seed)
    errors = {k: 0.0 for k in ("grad", "hess", "jacobian", "hessians", "F_prime")}
    failure = None
    for p in range(n_probes):
        if c.sampler is not None:
            x = c.sampler(rng) + 0.05 * rng.standard_normal(c.n)
        else:
            x = rng.standard_normal(c.n)
        lam = rng.standard_normal(c.m)
        z = KktPoint(x, lam)
        checks = {
            "grad": (_fd_jacobian(lambda y: np.array([obj.f(y)]), x, h)[0], obj.grad(x)),
            "hess": (_fd_jacobian(obj.grad, x, h), obj.hess(x)),
            "jacobian": (_fd_jacobian(c.g, x, h), c.jacobian(x)),
            "hessians": (_fd_jacobian(c.jacobian, x, h), c.hessians(x)),
            "F_prime": (
                _fd_jacobian(lambda v: eval_F(obj, c, KktPoint.from_vector(v, c.n)), z.z, h),
                eval_F_prime(obj, c, z),
            ),
        }
        for name, (fd, an) in checks.items():
            err = _rel_err(fd, an)
            errors[name] = max(errors[name], err)
            if err > rtol and failure is None:
                failure = {"evaluator": name, "probe": p, "rel_error": err, "x": x.tolist()}
    ok = failure is None
    if not ok and raise_on_fail:
        raise DerivativeMismatch(
            f"{failure['evaluator']} disagrees with finite differences at probe {failure['probe']}"
            f" (relative error {failure['rel_error']:.2e})",
            evaluator=failure["evaluator"],
            probe=failure["x"],
            rel_error=failure["rel_error"],
        )
    return FdReport(errors, ok, failure)


def max_stationary_residual(obj, c, omega: StationarySet):
    """Largest stationarity residual over the set (should be ~0)."""
    return max(stationarity_residual(obj, c, p) for p in omega.points)


def kkt_points(obj, c, omega: StationarySet):
    return [kkt_at(obj, c, p) for p in omega.points]
