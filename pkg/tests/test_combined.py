import json
import math

import numpy as np
import pytest

from conftest import exact_sphere_ledger
from proxopt.combined import (
    ConstantsLedger,
    ProblemHints,
    compute_switch_constant,
    estimate_ledger,
    run_combined,
    switch_constant_terms,
)
from proxopt.diagnostics import stationary_points_sphere_quadratic
from proxopt.errors import CannotEstimate, FallbackExhausted, IncompleteLedger
from proxopt.kkt import eval_F, kkt_at, stationarity_residual
from proxopt.manifold import levelset
from proxopt.problems import sphere_quadratic, stiefel_quadratic


def test_switch_constant_example():
    led = ConstantsLedger(mu=1.0, beta=0.5, L1Fx=2.0, sigma0=1.0, L1F=2.0)
    assert compute_switch_constant(led) == pytest.approx(0.03125)
    assert led.C_binding == "newton"
    assert switch_constant_terms(led) == pytest.approx((0.25, 0.03125))


def test_switch_constant_sigma_scaling():
    led = ConstantsLedger(mu=1.0, beta=0.5, L1Fx=2.0, sigma0=1.0, L1F=2.0)
    t1, n1 = switch_constant_terms(led)
    led2 = ConstantsLedger(mu=1.0, beta=0.5, L1Fx=2.0, sigma0=2.0, L1F=2.0)
    t2, n2 = switch_constant_terms(led2)
    assert t2 == pytest.approx(t1 / 2) and n2 == pytest.approx(n1 / 4)


def test_switch_constant_rejects_small_beta_and_missing():
    with pytest.raises(IncompleteLedger):
        compute_switch_constant(ConstantsLedger(mu=1.0, beta=1e-4, L1Fx=2.0, sigma0=1.0, L1F=2.0))
    with pytest.raises(IncompleteLedger) as info:
        compute_switch_constant(ConstantsLedger(mu=1.0, beta=0.5))
    assert set(info.value.missing) == {"L1Fx", "sigma0", "L1F"}
    with pytest.raises(IncompleteLedger):
        compute_switch_constant(ConstantsLedger(mu=1.0, beta=0.5, L1Fx=2.0, sigma0=math.inf, L1F=2.0))


def test_ledger_provenance_and_hypotheses():
    led = ConstantsLedger(L1=3.0)
    assert led.provenance == {"L1": "user"}
    led.set("mu", 1.0, "sampled")
    assert not led.is_exact(["L1", "mu"]) and led.is_exact(["L1"])
    with pytest.raises(ValueError):
        ConstantsLedger(provenance={"L1": "guess"})
    led = ConstantsLedger(beta=0.5, L1Fx=2.0, sigma0=1.0, d=1.0, L1F=2.0, r=1.0)
    assert led.hypotheses() == {"beta_le_L1Fx_sigma0_d": True, "newton_ball_within_r": True}
    json.dumps(led.to_dict())


# ---------------------------------------------------------------- estimation


def test_estimate_ledger_sphere_diag124():
    p = sphere_quadratic(A=np.diag([1.0, 2.0, 4.0]))
    om = stationary_points_sphere_quadratic(p.A)
    led = estimate_ledger(p.obj, p.c, ProblemHints(omega=om, n_pairs=300))
    assert led.sigma0 == pytest.approx(max(1 / s for s in om.sigma_values))
    assert led.provenance["sigma0"] == "closed_form"
    assert led.mu >= 1.0 - 1e-9 and led.provenance["mu"] == "sampled"
    assert led.provenance["L1F"] == "sampled" and led.L1F >= 4 / math.sqrt(3) * 0.5
    assert led.d == pytest.approx(math.sqrt(2) / 2)
    assert led.f_min == pytest.approx(1.0)


def test_estimate_ledger_user_values_unchanged():
    p = sphere_quadratic(spectrum=[1.0, 2.0, 4.0], seed=0)
    fields = dict(L0=9.0, L1=9.0, R=1.0, mu=1.0, nu=0.5, gamma0=0.1, sigma0=0.5, beta=0.3, L1F=3.0,
                  L1Fx=7.0, L_lambda=3.0, d=0.7, r=2.0, C=0.01, delta_f=2.0, f_min=1.0)
    led = estimate_ledger(p.obj, p.c, ProblemHints(), ConstantsLedger(**fields))
    for k, v in fields.items():
        assert getattr(led, k) == v and led.provenance[k] == "user"


def test_estimate_ledger_sampled_L1_overestimates():
    # the true L1 of (Ax, x) is 2 ||A||; the 1.5x-inflated sampled Lipschitz constants
    # of lambda_x and F' should dominate their closed forms too
    p = sphere_quadratic(spectrum=[1.0, 2.0, 4.0], seed=3)
    led = estimate_ledger(p.obj, p.c, ProblemHints(n_pairs=400, required=()))
    assert led.L_lambda >= 3.0 and led.L1Fx >= 3.0 + math.sqrt(13) and led.L1F >= 4 / math.sqrt(3)


def test_estimate_ledger_cannot_estimate_without_sampler():
    c = levelset(2, 1, lambda x: np.array([x @ x - 1]), lambda x: 2 * x[None, :], lambda x: 2 * np.eye(2)[None], 1.0)
    p = sphere_quadratic(spectrum=[1.0, 2.0])
    with pytest.raises(CannotEstimate):
        estimate_ledger(p.obj, c, ProblemHints(required=("L1F",)))


# ---------------------------------------------------------------- driver


def test_run_combined_stationary_start():
    p = sphere_quadratic(spectrum=[1.0, 2.0, 4.0], seed=0)
    led = exact_sphere_ledger(p)
    x0 = np.linalg.eigh(p.A)[1][:, 0]
    res = run_combined(p.obj, p.c, x0, led, 1e-10)
    assert res.converged and res.n1_actual == 0 and res.n2_actual == 0


def test_run_combined_sphere_exact(sphere10, sphere10_ledger):
    p = sphere10
    rng = np.random.default_rng(0)
    for _ in range(5):
        x0 = p.c.sampler(rng)
        res = run_combined(p.obj, p.c, x0, sphere10_ledger, 1e-10)
        assert res.converged and res.residual <= 1e-10
        assert res.verdict == "exact" and res.bounds_ok
        assert res.n1_actual + res.n2_actual <= res.n1_bound + res.n2_bound
        assert res.fallbacks == 0 and res.certificate.certified
        gpa, newton = res.trace.phase("gpa"), res.trace.phase("newton")
        np.testing.assert_array_equal(gpa[-1].x, newton[0].x)
        # the handoff multiplier reproduces the residual and sits below C
        z0 = kkt_at(p.obj, p.c, gpa[-1].x)
        np.testing.assert_allclose(newton[0].lam, z0.lam)
        assert np.linalg.norm(eval_F(p.obj, p.c, z0)) == pytest.approx(gpa[-1].residual, abs=1e-12)
        assert gpa[-1].residual <= res.C_initial
        assert all(abs(np.linalg.norm(r.x) - 1) <= 1e-12 for r in gpa)


def test_run_combined_to_dict(sphere10, sphere10_ledger):
    res = run_combined(sphere10.obj, sphere10.c, sphere10.c.sampler(np.random.default_rng(1)), sphere10_ledger, 1e-10)
    d = res.to_dict()
    text = json.dumps(d)
    assert set(d) >= {"phase_counts", "bounds", "verdict", "x", "residual", "ledger"}
    assert d["ledger"]["provenance"]["mu"] == "closed_form"
    assert "NaN" not in text


def test_run_combined_sampled_ledger_is_heuristic(sphere10):
    p = sphere10
    om = stationary_points_sphere_quadratic(p.A)
    led = estimate_ledger(p.obj, p.c, ProblemHints(omega=om, n_pairs=200, n_teb_samples=500))
    res = run_combined(p.obj, p.c, p.c.sampler(np.random.default_rng(2)), led, 1e-10)
    assert res.converged and res.verdict == "heuristic"


def test_run_combined_fallback_on_uncertified_handoff(sphere10, sphere10_ledger):
    p = sphere10
    led = sphere10_ledger.copy()
    led.set("C", 50.0, "user")  # switch immediately, far from any stationary point
    res = run_combined(p.obj, p.c, p.c.sampler(np.random.default_rng(4)), led, 1e-10)
    assert res.converged and res.fallbacks >= 1
    assert res.certificates[0] is not None and not res.certificates[0].certified
    assert res.certificates[0].h >= 0.25
    assert res.C_final < res.C_initial and res.verdict == "heuristic"


def test_run_combined_fallback_exhausted(sphere10, sphere10_ledger):
    led = sphere10_ledger.copy()
    led.set("C", 50.0, "user")
    with pytest.raises(FallbackExhausted) as info:
        run_combined(sphere10.obj, sphere10.c, sphere10.c.sampler(np.random.default_rng(4)), led, 1e-10, fallback_max=0)
    assert info.value.trace is not None


def test_run_combined_needs_L1F(sphere10):
    with pytest.raises(IncompleteLedger):
        run_combined(sphere10.obj, sphere10.c, sphere10.c.sampler(np.random.default_rng(0)), ConstantsLedger(C=0.1), 1e-8)


def test_run_combined_stiefel():
    p = stiefel_quadratic(20, 3, spectrum=np.arange(1.0, 21.0), seed=2)
    led = estimate_ledger(p.obj, p.c, ProblemHints(required=("L1F",)), ConstantsLedger(C=1e-2))
    rng = np.random.default_rng(0)
    for _ in range(3):
        res = run_combined(p.obj, p.c, p.c.sampler(rng), led, 1e-8)
        assert res.converged and stationarity_residual(p.obj, p.c, res.x) <= 1e-8
        assert res.verdict == "heuristic"
