"""Two-phase driver: gradient projection until the switching rule fires, then
the modified Newton method on the Lagrangian system.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import StationarySet, nondegeneracy_check, verify_teb
from .errors import CannotEstimate, FallbackExhausted, IncompleteLedger, SingularJacobian
from .gpa import GpaConfig, n1_bound, run_gpa, step_size_bounds
from .kkt import KktPoint, ObjectiveMap, eval_F_prime, kkt_at, lambda_x, stationarity_residual
from .manifold import ConstraintMap
from .newton import basin_check, n2_bound, run_newton
from .trace import IterationTrace

log = logging.getLogger(__name__)

BETA_MIN = 1e-3
DEFAULT_BETA = 0.5
FALLBACK_MAX = 20
LIPSCHITZ_INFLATION = 1.5
PROVENANCES = ("user", "sampled", "closed_form")

LEDGER_FIELDS = (
    "L0", "L1", "R", "mu", "nu", "gamma0", "sigma0", "beta", "L1F", "L1Fx",
    "L_lambda", "d", "r", "C", "delta_f", "f_min",
)
SWITCH_FIELDS = ("mu", "beta", "L1Fx", "sigma0", "L1F")


@dataclass
class ConstantsLedger:
    """Every constant the algorithm and its bounds depend on.

    Fields passed to the constructor are flagged ``"user"`` unless
    ``provenance`` says otherwise; :func:`estimate_ledger` fills the rest.
    """

    L0: Optional[float] = None
    L1: Optional[float] = None
    R: Optional[float] = None
    mu: Optional[float] = None
    nu: Optional[float] = None
    gamma0: Optional[float] = None
    sigma0: Optional[float] = None
    beta: Optional[float] = None
    L1F: Optional[float] = None
    L1Fx: Optional[float] = None
    L_lambda: Optional[float] = None
    d: Optional[float] = None
    r: Optional[float] = None
    C: Optional[float] = None
    delta_f: Optional[float] = None
    f_min: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in LEDGER_FIELDS:
            if getattr(self, name) is not None:
                self.provenance.setdefault(name, "user")
        bad = set(self.provenance.values()) - set(PROVENANCES)
        if bad:
            raise ValueError(f"unknown provenance flags {bad}")

    def set(self, name, value, source):
        setattr(self, name, None if value is None else float(value))
        if value is None:
            self.provenance.pop(name, None)
        else:
            self.provenance[name] = source

    def copy(self):
        return dataclasses.replace(self, provenance=dict(self.provenance))

    def is_exact(self, names):
        return all(
            getattr(self, n) is not None and self.provenance.get(n) in ("user", "closed_form") for n in names
        )

    def hypotheses(self):
        """Which of the switching hypotheses hold for these values."""
        out = {}
        if None not in (self.beta, self.L1Fx, self.sigma0, self.d):
            out["beta_le_L1Fx_sigma0_d"] = self.beta <= self.L1Fx * self.sigma0 * self.d
        if None not in (self.beta, self.sigma0, self.L1F, self.r):
            out["newton_ball_within_r"] = (1 - self.beta) / (2 * self.sigma0 * self.L1F) <= self.r
        return out

    def to_dict(self):
        d = {n: getattr(self, n) for n in LEDGER_FIELDS}
        d["provenance"] = dict(self.provenance)
        return d


def switch_constant_terms(ledger: ConstantsLedger, beta_min=BETA_MIN):
    """The two candidates ``mu beta / (L1Fx sigma0)`` and
    ``(1 - beta)^2 / (4 L1F sigma0^2)`` for the switching constant."""
    missing = [
        n for n in SWITCH_FIELDS
        if getattr(ledger, n) is None or not math.isfinite(getattr(ledger, n)) or getattr(ledger, n) <= 0
    ]
    if missing:
        raise IncompleteLedger(f"cannot form the switching constant, missing/invalid: {missing}", missing)
    b = ledger.beta
    if not beta_min <= b < 1:
        raise IncompleteLedger(f"beta={b:g} must lie in [{beta_min:g}, 1)", ["beta"])
    teb_term = ledger.mu * b / (ledger.L1Fx * ledger.sigma0)
    newton_term = (1 - b) ** 2 / (4 * ledger.L1F * ledger.sigma0**2)
    return teb_term, newton_term


def compute_switch_constant(ledger: ConstantsLedger, beta_min=BETA_MIN):
    """Switching threshold ``C`` on ``||P_T f'||``; ``ledger.C_binding`` names
    the smaller term (``"teb"`` or ``"newton"``)."""
    teb_term, newton_term = switch_constant_terms(ledger, beta_min)
    ledger.C_binding = "teb" if teb_term <= newton_term else "newton"
    return min(teb_term, newton_term)


# ---------------------------------------------------------------- estimation


@dataclass
class ProblemHints:
    """Side information for :func:`estimate_ledger`.

    ``closed_form`` maps ledger field names to exactly known values (e.g. from
    :func:`proxopt.diagnostics.sphere_quadratic_constants`).
    """

    omega: Optional[StationarySet] = None
    closed_form: dict = field(default_factory=dict)
    sampler: Optional[object] = None
    beta: float = DEFAULT_BETA
    n_pairs: int = 200
    n_teb_samples: int = 2000
    required: tuple = SWITCH_FIELDS
    seed: int = 0


def _pair_on_S(c, draw, rng):
    x = draw(rng)
    if rng.uniform() < 0.25:
        return x, draw(rng)
    delta = 10 ** rng.uniform(-4, 0)
    v = rng.standard_normal(c.n)
    return x, c.project(x + delta * v / np.linalg.norm(v))


def _sample_lipschitz(fun, pairs, dist):
    best = 0.0
    for a, b in pairs:
        dab = dist(a, b)
        if dab > 1e-12:
            best = max(best, float(np.linalg.norm(np.atleast_1d(fun(a) - fun(b)), 2) / dab))
    return best


def _matnorm_diff(A, B):
    return np.linalg.norm(A - B, 2)


def sample_L_lambda(obj, c, draw, n_pairs, rng):
    pairs = [_pair_on_S(c, draw, rng) for _ in range(n_pairs)]
    return _sample_lipschitz(lambda x: lambda_x(obj, c, x), pairs, lambda a, b: np.linalg.norm(a - b))


def sample_L1Fx(obj, c, draw, n_pairs, rng):
    best = 0.0
    for _ in range(n_pairs):
        x, y = _pair_on_S(c, draw, rng)
        dxy = np.linalg.norm(x - y)
        if dxy > 1e-12:
            diff = _matnorm_diff(eval_F_prime(obj, c, kkt_at(obj, c, x)), eval_F_prime(obj, c, kkt_at(obj, c, y)))
            best = max(best, diff / dxy)
    return best


def sample_L1F(obj, c, draw, n_pairs, rng, radius=0.5):
    """Largest ``||F'(z) - F'(z')|| / ||z - z'||`` over pairs near ``{[x, lambda_x]}``."""
    best = 0.0
    N = c.n + c.m
    for _ in range(n_pairs):
        x = draw(rng)
        z = np.concatenate([x, lambda_x(obj, c, x)]) + radius * rng.uniform() * _unit(rng, N)
        w = z + 10 ** rng.uniform(-3, 0) * radius * _unit(rng, N)
        A = eval_F_prime(obj, c, KktPoint.from_vector(z, c.n))
        B = eval_F_prime(obj, c, KktPoint.from_vector(w, c.n))
        best = max(best, _matnorm_diff(A, B) / np.linalg.norm(z - w))
    return best


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def estimate_ledger(obj: ObjectiveMap, c: ConstraintMap, hints: ProblemHints = None,
                    ledger: ConstantsLedger = None) -> ConstantsLedger:
    """Fill every unset ledger field that can be determined.

    Precedence: user values, then ``hints.closed_form``, then exact
    computations on an enumerated stationary set, then pairwise sampling
    (max ratio inflated by 1.5). Fields listed in ``hints.required`` that stay
    unset raise :class:`CannotEstimate`.
    """
    hints = hints or ProblemHints()
    led = ledger.copy() if ledger is not None else ConstantsLedger()
    rng = np.random.default_rng(hints.seed)
    draw = hints.sampler or c.sampler
    omega = hints.omega

    def fill(name, value, source):
        if getattr(led, name) is None and value is not None:
            led.set(name, value, source)

    for name, value in hints.closed_form.items():
        if name in LEDGER_FIELDS:
            fill(name, value, "closed_form")
    fill("L0", obj.L0, obj.lipschitz_source)
    fill("L1", obj.L1, obj.lipschitz_source)
    fill("R", c.prox_radius, "closed_form" if c.exact_projector is not None else "user")
    fill("beta", hints.beta, "user")
    gamma0, _ = step_size_bounds(led.L0, led.L1, led.R)
    fill("gamma0", gamma0, _worst(led, ("L0", "L1", "R")))

    if omega is not None and omega.complete:
        sigma0, _ = nondegeneracy_check(obj, c, omega)
        if math.isfinite(sigma0):
            fill("sigma0", sigma0, "closed_form")
        if len(omega) > 1:
            fill("d", omega.min_pairwise_distance() / 2.0, "closed_form")
        fill("f_min", min(obj.f(p) for p in omega.points), "closed_form")
        if led.mu is None and draw is not None:
            rep = verify_teb(obj, c, omega, hints.n_teb_samples, seed=hints.seed, sampler=draw)
            if not rep.vacuous:
                fill("mu", rep.mu_hat, "sampled")

    if draw is not None:
        if led.L_lambda is None:
            fill("L_lambda", LIPSCHITZ_INFLATION * sample_L_lambda(obj, c, draw, hints.n_pairs, rng), "sampled")
        if led.L1Fx is None:
            fill("L1Fx", LIPSCHITZ_INFLATION * sample_L1Fx(obj, c, draw, hints.n_pairs, rng), "sampled")
        if led.L1F is None:
            fill("L1F", LIPSCHITZ_INFLATION * sample_L1F(obj, c, draw, hints.n_pairs, rng), "sampled")

    if led.mu is not None:
        fill("nu", led.mu / (1 + led.L1 * led.gamma0 + led.mu * led.gamma0), _worst(led, ("mu", "L1", "gamma0")))
    if led.d is not None and led.L_lambda is not None:
        fill("r", led.d * math.sqrt(1 + led.L_lambda**2), _worst(led, ("d", "L_lambda")))

    missing = [n for n in hints.required if getattr(led, n) is None]
    if missing:
        raise CannotEstimate(f"no user value and no way to estimate {missing}")
    return led


def _worst(led, names):
    srcs = [led.provenance.get(n) for n in names]
    if "sampled" in srcs:
        return "sampled"
    return "closed_form" if "closed_form" in srcs else "user"


# ---------------------------------------------------------------- driver


@dataclass
class SolveResult:
    x: np.ndarray
    lam: np.ndarray
    residual: float
    converged: bool
    n1_actual: int
    n2_actual: int
    n1_bound: Optional[int]
    n2_bound: Optional[int]
    bounds_ok: Optional[bool]
    verdict: str
    gamma: float
    C_initial: float
    C_final: float
    fallbacks: int
    certificates: list
    trace: IterationTrace
    ledger: ConstantsLedger
    eps: float

    @property
    def certificate(self):
        return self.certificates[-1] if self.certificates else None

    def to_dict(self):
        return {
            "converged": self.converged,
            "residual": self.residual,
            "eps": self.eps,
            "phase_counts": {"gpa": self.n1_actual, "newton": self.n2_actual},
            "bounds": {"n1": self.n1_bound, "n2": self.n2_bound},
            "verdict": {"bounds_ok": self.bounds_ok, "kind": self.verdict},
            "gamma": self.gamma,
            "C_initial": self.C_initial,
            "C_final": self.C_final,
            "fallbacks": self.fallbacks,
            "certificates": [None if cert is None else dataclasses.asdict(cert) for cert in self.certificates],
            "x": self.x.tolist(),
            "lambda": self.lam.tolist(),
            "ledger": self.ledger.to_dict(),
        }


def run_combined(
    obj: ObjectiveMap,
    c: ConstraintMap,
    x0,
    ledger: ConstantsLedger,
    eps,
    gamma=None,
    switch_rule="residual",
    max_steps=100_000,
    newton_max_steps=100,
    fallback_max=FALLBACK_MAX,
    descent_check=True,
    basin_margin=0.0,
) -> SolveResult:
    """Gradient projection until ``||P_T f'|| <= C``, then modified Newton.

    ``C`` is ``ledger.C`` when set, otherwise the closed-form switching
    constant. If the Newton basin cannot be certified at the handoff point,
    ``C`` is halved (never below ``eps``) and the gradient phase resumes, at
    most ``fallback_max`` times. A numerically singular ``F'`` at the handoff
    drops ``C`` straight to ``eps``. A handoff point that already satisfies
    ``eps`` needs no Newton steps.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    led = ledger.copy()
    for name, value in (("L0", obj.L0), ("L1", obj.L1), ("R", c.prox_radius)):
        if getattr(led, name) is None:
            led.set(name, value, obj.lipschitz_source if name != "R" else "closed_form")
    user_C = led.C is not None
    if not user_C:
        led.set("C", compute_switch_constant(led), "sampled" if _worst(led, SWITCH_FIELDS) == "sampled" else "closed_form")
    if led.L1F is None:
        raise IncompleteLedger("L1F is needed for the Newton basin check", ["L1F"])
    gamma_max, gamma_opt = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
    gamma = gamma_opt if gamma is None else gamma
    x0 = np.asarray(x0, dtype=float)
    if led.f_min is not None:
        led.set("delta_f", max(obj.f(x0) - led.f_min, 0.0), led.provenance["f_min"])

    C0 = C = led.C
    trace = IterationTrace()
    trace.meta.update(gamma=gamma, C=C0)
    certificates = []
    x = x0
    used = 0
    z_final = None
    for attempt in range(fallback_max + 1):
        cfg = GpaConfig(gamma, C, switch_rule, max_steps - used, descent_check)
        x, trace = run_gpa(obj, c, x, cfg, trace=trace)
        used = trace.phase("gpa")[-1].k
        if stationarity_residual(obj, c, x) <= eps:
            z_final = kkt_at(obj, c, x)
            break
        z0 = KktPoint(x, lambda_x(obj, c, x))
        singular = False
        try:
            cert = basin_check(obj, c, z0, led.L1F, basin_margin)
        except SingularJacobian:
            # nondegeneracy fails here (e.g. a continuum of stationary points),
            # so halving C cannot help: finish with the gradient phase alone
            cert, singular = None, True
        certificates.append(cert)
        if cert is not None and cert.certified:
            z_final, trace = run_newton(obj, c, z0, eps, newton_max_steps, trace=trace)
            break
        log.info("Newton basin not certified at C=%.3e; resuming GPA", C)
        if attempt == fallback_max:
            raise FallbackExhausted(
                f"no certified Newton basin after {fallback_max} halvings of C", trace=trace, x=x
            )
        C = eps if singular else max(C / 2.0, eps)

    n1 = trace.phase("gpa")[-1].k
    newton_rows = trace.phase("newton")
    n2 = newton_rows[-1].k if newton_rows else 0
    residual = newton_rows[-1].residual if newton_rows else stationarity_residual(obj, c, z_final.x)

    n1b = None
    if led.delta_f is not None and 0 < gamma * obj.L1 < 1:
        n1b = n1_bound(led.delta_f, gamma, obj.L1, C) if led.delta_f > 0 else 0
    n2b = None
    if led.sigma0 is not None and led.beta is not None and math.isfinite(led.sigma0):
        n2b = n2_bound(C0, led.sigma0, led.beta, eps)
    bounds_ok = None
    if n1b is not None and n2b is not None:
        bounds_ok = bool(n1 <= n1b and n2 <= n2b)
    exact = not user_C and led.is_exact(("L1", "delta_f") + SWITCH_FIELDS)
    return SolveResult(
        x=z_final.x,
        lam=z_final.lam,
        residual=float(residual),
        converged=bool(residual <= eps),
        n1_actual=n1,
        n2_actual=n2,
        n1_bound=n1b,
        n2_bound=n2b,
        bounds_ok=bounds_ok,
        verdict="exact" if exact else "heuristic",
        gamma=gamma,
        C_initial=C0,
        C_final=C,
        fallbacks=len([ct for ct in certificates if ct is None or not ct.certified]),
        certificates=certificates,
        trace=trace,
        ledger=led,
        eps=eps,
    )
