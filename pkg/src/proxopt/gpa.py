"""Gradient projection phase: ``x_{k+1} = P_S(x_k - gamma f'(x_k))``."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DescentViolation, InvalidStepSize, MaxStepsExceeded
from .kkt import ObjectiveMap, stationarity_residual
from .manifold import ConstraintMap
from .trace import IterationTrace, TraceRow

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-12
RESIDUAL_INEQ_SLACK = 1e-9
SWITCH_RULES = ("residual", "step_length")


@dataclass
class GpaConfig:
    gamma: float
    switch_C: float
    switch_rule: str = "residual"
    max_steps: int = 100_000
    descent_check: bool = True

    def __post_init__(self):
        if self.switch_rule not in SWITCH_RULES:
            raise ValueError(f"switch_rule must be one of {SWITCH_RULES}")
        if not self.switch_C > 0:
            raise ValueError("switch_C must be positive")


def step_size_bounds(L0, L1, R):
    """Return ``(gamma_max, gamma_opt)``.

    ``gamma_max = min(1/L1, R/L0)`` is the admissible supremum and
    ``gamma_opt = min(1/(3 L1), R/L0)`` minimises the step-count bound.
    """
    if not (L0 > 0 and L1 > 0 and R > 0):
        raise ValueError("L0, L1, R must be positive")
    return min(1.0 / L1, R / L0), min(1.0 / (3.0 * L1), R / L0)


def check_gamma(obj: ObjectiveMap, c: ConstraintMap, gamma):
    gamma_max, _ = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
    if not 0 < gamma < gamma_max:
        raise InvalidStepSize(f"gamma={gamma:g} outside (0, {gamma_max:g})")


def descent_bound(f_old, step_len, gamma, L1):
    """Right-hand side of the sufficient-decrease inequality, with rounding slack."""
    return f_old - 0.5 * (1.0 / gamma - L1) * step_len**2 + DESCENT_SLACK * (1.0 + abs(f_old))


def gpa_step(obj: ObjectiveMap, c: ConstraintMap, x, gamma, descent_check=False):
    """One projected gradient step; optionally asserts sufficient decrease."""
    x = np.asarray(x, dtype=float)
    x_new = c.project(x - gamma * obj.grad(x))
    if descent_check:
        f_old, f_new = obj.f(x), obj.f(x_new)
        bound = descent_bound(f_old, np.linalg.norm(x_new - x), gamma, obj.L1)
        if f_new > bound:
            raise DescentViolation(
                f"f rose to {f_new!r} above the decrease bound {bound!r}; check L0/L1/R",
                f_old=f_old,
                f_new=f_new,
                bound=bound,
            )
    return x_new


def gradient_mapping(obj: ObjectiveMap, c: ConstraintMap, x, gamma):
    """``(x - P_S(x - gamma f'(x))) / gamma``."""
    x = np.asarray(x, dtype=float)
    return (x - gpa_step(obj, c, x, gamma)) / gamma


def n1_bound(delta_f, gamma, L1, C):
    """Step count after which some iterate has ``||P_T f'|| <= C``."""
    if not 0 < gamma * L1 < 1:
        raise ValueError("need 0 < gamma < 1/L1")
    if not (C > 0 and delta_f >= 0):
        raise ValueError("need C > 0 and delta_f >= 0")
    value = 2.0 * delta_f * (1.0 + gamma * L1) ** 2 / (C**2 * gamma * (1.0 - gamma * L1))
    return max(1, math.ceil(value))


def step_switch_threshold(gamma, L1, C):
    return gamma * C / (1.0 + gamma * L1)


def _should_switch(cfg, L1, residual, step_len):
    if cfg.switch_rule == "residual":
        return residual <= cfg.switch_C
    return step_len is not None and step_len <= step_switch_threshold(cfg.gamma, L1, cfg.switch_C)


def run_gpa(obj: ObjectiveMap, c: ConstraintMap, x0, cfg: GpaConfig, trace=None):
    """Iterate projected gradient steps until the switching rule fires.

    Passing an existing ``trace`` resumes it: ``x0`` is then taken to be the
    iterate of its last row and step indices continue from there.

    Returns
    -------
    x_hat : ndarray
        Iterate at which the switching condition held.
    trace : IterationTrace
        One ``"gpa"`` row per iterate, including the starting point.
    """
    check_gamma(obj, c, cfg.gamma)
    gamma, L1 = cfg.gamma, obj.L1
    x = np.asarray(x0, dtype=float)
    fx = obj.f(x)
    res = stationarity_residual(obj, c, x)
    if trace is None:
        trace = IterationTrace()
    gpa_rows = trace.phase("gpa")
    if gpa_rows:
        k = gpa_rows[-1].k
    else:
        k = 0
        trace.append(TraceRow(k=0, phase="gpa", f=fx, residual=res, x=x.copy()))

    step_len = None
    steps = 0
    while not _should_switch(cfg, L1, res, step_len):
        if steps >= cfg.max_steps:
            raise MaxStepsExceeded(
                f"GPA did not meet the switching rule in {cfg.max_steps} steps", trace=trace, x=x
            )
        grad = obj.grad(x)
        x_new = c.project(x - gamma * grad)
        f_new = obj.f(x_new)
        step_len = float(np.linalg.norm(x_new - x))
        descent_ok = f_new <= descent_bound(fx, step_len, gamma, L1)
        grad_new = obj.grad(x_new)
        res_new = stationarity_residual(obj, c, x_new)
        ineq_rhs = (1.0 / gamma + L1) * step_len * (1.0 + RESIDUAL_INEQ_SLACK)
        # absolute term covers rounding once both sides reach machine precision
        ineq_ok = res_new <= ineq_rhs + 1e-14 * (1.0 + np.linalg.norm(grad_new))
        k += 1
        steps += 1
        trace.append(
            TraceRow(
                k=k,
                phase="gpa",
                f=f_new,
                residual=res_new,
                step_len=step_len,
                descent_ok=bool(descent_ok),
                residual_ineq_ok=bool(ineq_ok),
                x=x_new.copy(),
            )
        )
        if cfg.descent_check and not descent_ok:
            raise DescentViolation(
                f"step {k}: f={f_new!r} violates the decrease bound from f={fx!r}",
                k=k,
                f_old=fx,
                f_new=f_new,
            )
        x, fx, res = x_new, f_new, res_new
    log.debug("GPA switched at k=%d residual=%.3e", k, res)
    return x, trace
