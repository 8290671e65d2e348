import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from proxopt.errors import DescentViolation, InvalidStepSize, MaxStepsExceeded
from proxopt.gpa import (
    GpaConfig,
    check_gamma,
    gpa_step,
    gradient_mapping,
    n1_bound,
    run_gpa,
    step_size_bounds,
    step_switch_threshold,
)
from proxopt.kkt import ObjectiveMap, quadratic_form, stationarity_residual
from proxopt.manifold import sphere
from proxopt.problems import sphere_quadratic

A12 = np.diag([1.0, 2.0])


def test_step_size_bounds_examples():
    gmax, gopt = step_size_bounds(2.0, 4.0, 1.0)
    assert gmax == 0.25 and gopt == pytest.approx(1 / 12)
    gmax, gopt = step_size_bounds(10.0, 0.1, 0.5)
    assert gmax == pytest.approx(0.05) and gopt == pytest.approx(0.05)
    with pytest.raises(ValueError):
        step_size_bounds(0.0, 1.0, 1.0)


@pytest.mark.parametrize("L1", [0.5, 4.0, 37.0])
def test_gamma_opt_minimises_step_factor(L1):
    # R/L0 loose, so the minimiser is interior
    gmax, gopt = step_size_bounds(1e-6, L1, 1.0)
    res = minimize_scalar(lambda g: (1 + g * L1) ** 2 / (g * (1 - g * L1)), bounds=(1e-9, gmax * (1 - 1e-9)),
                          method="bounded", options={"xatol": 1e-12})
    assert res.x == pytest.approx(gopt, rel=1e-5)


def test_check_gamma():
    obj, c = quadratic_form(A12), sphere(2)
    check_gamma(obj, c, 0.1)
    for bad in (0.0, 0.25, 0.3, -1.0):
        with pytest.raises(InvalidStepSize):
            check_gamma(obj, c, bad)


def test_gpa_step_hand_example():
    obj, c = quadratic_form(A12), sphere(2)
    x = np.array([1.0, 1.0]) / math.sqrt(2)
    y = gpa_step(obj, c, x, 0.1, descent_check=True)
    # x - 0.1 f'(x) = sqrt2 (0.4, 0.3), normalised
    np.testing.assert_allclose(y, [0.8, 0.6], atol=1e-15)
    assert obj.f(y) == pytest.approx(1.36)
    dx = np.linalg.norm(y - x)
    assert obj.f(x) - obj.f(y) >= 0.5 * (1 / 0.1 - 4.0) * dx**2


def test_gpa_step_fixed_point_and_gradient_mapping():
    obj, c = quadratic_form(A12), sphere(2)
    e2 = np.array([0.0, 1.0])
    np.testing.assert_allclose(gpa_step(obj, c, e2, 0.1), e2, atol=1e-15)
    np.testing.assert_allclose(gradient_mapping(obj, c, e2, 0.1), 0.0, atol=1e-14)
    x = np.array([0.6, 0.8])
    gm = gradient_mapping(obj, c, x, 0.05)
    assert np.linalg.norm(gm) == pytest.approx(np.linalg.norm(x - gpa_step(obj, c, x, 0.05)) / 0.05)


def test_gpa_step_descent_violation_with_wrong_constants():
    A = np.diag([1.0, 10.0])
    true = quadratic_form(A)
    liar = ObjectiveMap(true.eval_f, true.eval_grad, true.eval_hess, L0=0.1, L1=0.1)
    x = np.array([1.0, 1.0]) / math.sqrt(2)
    with pytest.raises(DescentViolation):
        gpa_step(liar, sphere(2), x, 0.9, descent_check=True)
    with pytest.raises(DescentViolation) as info:
        run_gpa(liar, sphere(2), x, GpaConfig(gamma=0.9, switch_C=1e-6))
    assert info.value.k == 1


# ---------------------------------------------------------------- n1 bound


def test_n1_bound_example():
    assert n1_bound(1.0, 0.1, 4.0, 0.1) == 6534
    assert n1_bound(1e-9, 0.1, 4.0, 1e3) == 1
    assert n1_bound(0.0, 0.1, 4.0, 1.0) == 1
    with pytest.raises(ValueError):
        n1_bound(1.0, 0.3, 4.0, 0.1)


@given(
    st.floats(1e-3, 1e3), st.floats(0.01, 0.99), st.floats(0.1, 10), st.floats(1e-3, 10), st.floats(1.0, 4.0)
)
def test_n1_bound_monotone(delta_f, t, L1, C, factor):
    g = t / L1
    assert n1_bound(delta_f, g, L1, C * factor) <= n1_bound(delta_f, g, L1, C)
    assert n1_bound(delta_f * factor, g, L1, C) >= n1_bound(delta_f, g, L1, C)


# ---------------------------------------------------------------- run_gpa


def test_run_gpa_stationary_start_switches_immediately():
    p = sphere_quadratic(spectrum=[1.0, 2.0, 3.0], seed=0)
    x0 = np.linalg.eigh(p.A)[1][:, 0]
    x, tr = run_gpa(p.obj, p.c, x0, GpaConfig(0.05, 1e-3))
    assert len(tr) == 1 and tr[0].k == 0
    np.testing.assert_array_equal(x, x0)


def test_run_gpa_properties_and_bound(sphere10):
    p = sphere10
    gmax, gopt = step_size_bounds(p.obj.L0, p.obj.L1, p.c.R)
    fmin = float(np.linalg.eigvalsh(p.A)[0])
    rng = np.random.default_rng(3)
    for _ in range(10):
        x0 = p.c.sampler(rng)
        x, tr = run_gpa(p.obj, p.c, x0, GpaConfig(gopt, 1e-3))
        rows = tr.phase("gpa")
        assert rows[-1].residual <= 1e-3
        assert all(r.residual > 1e-3 for r in rows[:-1])
        assert rows[-1].k <= n1_bound(p.obj.f(x0) - fmin, gopt, p.obj.L1, 1e-3)
        assert all(r.descent_ok and r.residual_ineq_ok for r in rows[1:])
        assert all(abs(np.linalg.norm(r.x) - 1) <= 1e-12 for r in rows)
        fs = [r.f for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))


def test_step_length_rule_implies_residual_rule(sphere10):
    p = sphere10
    _, gopt = step_size_bounds(p.obj.L0, p.obj.L1, p.c.R)
    rng = np.random.default_rng(8)
    C = 1e-2
    for _ in range(10):
        x0 = p.c.sampler(rng)
        x, tr = run_gpa(p.obj, p.c, x0, GpaConfig(gopt, C, switch_rule="step_length"))
        last = tr[-1]
        assert last.step_len <= step_switch_threshold(gopt, p.obj.L1, C)
        assert stationarity_residual(p.obj, p.c, x) <= C * (1 + 1e-9)
        # the residual rule would have fired at or before this index
        _, tr_res = run_gpa(p.obj, p.c, x0, GpaConfig(gopt, C))
        assert tr_res[-1].k <= last.k


def test_run_gpa_budget_and_resume(sphere10):
    p = sphere10
    _, gopt = step_size_bounds(p.obj.L0, p.obj.L1, p.c.R)
    x0 = p.c.sampler(np.random.default_rng(0))
    with pytest.raises(MaxStepsExceeded) as info:
        run_gpa(p.obj, p.c, x0, GpaConfig(gopt, 1e-12, max_steps=3))
    tr = info.value.trace
    assert [r.k for r in tr] == [0, 1, 2, 3]
    np.testing.assert_array_equal(info.value.x, tr[-1].x)
    x, tr2 = run_gpa(p.obj, p.c, info.value.x, GpaConfig(gopt, 1e-3), trace=tr)
    ks = [r.k for r in tr2]
    assert ks == list(range(len(ks)))
    _, fresh = run_gpa(p.obj, p.c, x0, GpaConfig(gopt, 1e-3))
    assert [r.f for r in fresh] == [r.f for r in tr2]


def test_gpa_config_validation():
    with pytest.raises(ValueError):
        GpaConfig(0.1, 1.0, switch_rule="other")
    with pytest.raises(ValueError):
        GpaConfig(0.1, 0.0)
