"""Command-line front end: ``proxopt solve | verify | sweep``.

Exit codes: 0 success, 1 usage or configuration error, 2 budget or
convergence failure (a partial trace is still written when one exists).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import importlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics
from .combined import ConstantsLedger, ProblemHints, compute_switch_constant, estimate_ledger, run_combined
from .errors import (
    CannotEstimate,
    DegenerateSpectrum,
    DerivativeMismatch,
    DescentViolation,
    DivergenceDetected,
    FallbackExhausted,
    IncompleteLedger,
    InvalidStepSize,
    MaxStepsExceeded,
    ProxoptError,
)
from .gpa import GpaConfig, n1_bound, run_gpa, step_size_bounds
from .problems import Problem, sphere_quadratic, stiefel_quadratic
from .trace import IterationTrace

log = logging.getLogger("proxopt")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2
DEFAULT_SWITCH_C = 1e-2
SWEEP_COLUMNS = ("gamma", "n1_actual", "n1_bound", "status", "reason")
BUDGET_ERRORS = (MaxStepsExceeded, FallbackExhausted, DivergenceDetected, DescentViolation)
CONFIG_ERRORS = (DegenerateSpectrum, InvalidStepSize, IncompleteLedger, CannotEstimate, ValueError)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- problem setup


def parse_spectrum(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(t) for t in str(text).split(",") if t.strip()])
    except ValueError:
        raise ConfigError(f"malformed spectrum {text!r}") from None


def load_plugin(ref):
    """``"module:callable"``; the callable returns a :class:`Problem` or ``(obj, c)``."""
    if not ref or ":" not in ref:
        raise ConfigError("--plugin must look like 'module:callable'")
    mod_name, _, attr = ref.partition(":")
    if os.getcwd() not in sys.path:
        sys.path.insert(0, os.getcwd())
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load plugin {ref!r}: {exc}") from None
    made = factory()
    if isinstance(made, Problem):
        return made
    obj, c = made
    return Problem(obj, c, name=ref)


def build_problem(args) -> Problem:
    spectrum = parse_spectrum(args.spectrum)
    if args.problem == "sphere":
        if spectrum is None:
            spectrum = np.arange(1, args.n + 1, dtype=float)
        return sphere_quadratic(spectrum=spectrum, seed=args.seed)
    if args.problem == "stiefel":
        n = args.n if spectrum is None else len(spectrum)
        if not 0 < args.k < n:
            raise ConfigError(f"need 0 < k < n, got n={n}, k={args.k}")
        return stiefel_quadratic(n, args.k, spectrum=spectrum, seed=args.seed)
    return load_plugin(args.plugin)


def closed_form_fmin(problem: Problem):
    if problem.spectrum is None:
        return None
    k = problem.c.params.get("k", 1) if problem.c.params else 1
    return float(np.sort(problem.spectrum)[:k].sum())


def build_ledger(args, problem: Problem) -> ConstantsLedger:
    """Exact constants for sphere quadratics, sampled ``L1F`` plus a user ``C`` otherwise."""
    overrides = dict(getattr(args, "ledger", None) or {})
    if args.switch_c is not None:
        overrides["C"] = args.switch_c
    user = ConstantsLedger(**overrides)
    if args.problem == "sphere":
        consts = diagnostics.sphere_quadratic_constants(problem.A)
        consts["beta"] = args.beta
        hints = ProblemHints(closed_form=consts, beta=args.beta, seed=args.seed)
        return estimate_ledger(problem.obj, problem.c, hints, user)
    if user.C is None:
        user.set("C", DEFAULT_SWITCH_C, "user")
    fmin = closed_form_fmin(problem)
    hints = ProblemHints(
        closed_form={} if fmin is None else {"f_min": fmin},
        beta=args.beta,
        required=("L1F",),
        seed=args.seed,
    )
    return estimate_ledger(problem.obj, problem.c, hints, user)


def start_point(problem: Problem, seed):
    rng = np.random.default_rng(seed)
    if problem.c.sampler is not None:
        return problem.c.sampler(rng)
    return problem.c.project(rng.standard_normal(problem.c.n))


# ---------------------------------------------------------------- output


def out_dir(args):
    path = Path(args.out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_plain(payload), fh, indent=2, allow_nan=False)
        fh.write("\n")


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_trace(args, trace: IterationTrace):
    if trace is None:
        return None
    path = out_dir(args) / f"trace.{args.format}"
    trace.write(path, args.format)
    return path


# ---------------------------------------------------------------- commands


def cmd_solve(args):
    problem = build_problem(args)
    ledger = build_ledger(args, problem)
    x0 = start_point(problem, args.seed)
    rule = "step_length" if args.switch_rule == "step" else "residual"
    try:
        result = run_combined(
            problem.obj, problem.c, x0, ledger, args.eps,
            gamma=args.gamma, switch_rule=rule, max_steps=args.max_steps,
        )
    except BUDGET_ERRORS as exc:
        trace = getattr(exc, "trace", None)
        path = write_trace(args, trace)
        write_json(out_dir(args) / "result.json", {"converged": False, "error": type(exc).__name__, "message": str(exc)})
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if path is not None:
            print(f"partial trace written to {path}", file=sys.stderr)
        return EXIT_BUDGET
    write_trace(args, result.trace)
    payload = result.to_dict()
    payload["problem"] = {"kind": args.problem, "name": problem.name, "n": problem.c.n, "m": problem.c.m}
    write_json(out_dir(args) / "result.json", payload)
    print(
        f"residual={result.residual:.3e} gpa_steps={result.n1_actual} newton_steps={result.n2_actual}"
        f" verdict={result.verdict}"
    )
    return EXIT_OK if result.converged else EXIT_BUDGET


def _fd_section(problem, args):
    try:
        rep = diagnostics.fd_consistency(problem.obj, problem.c, n_probes=args.fd_probes, seed=args.seed)
        return {"ok": True, "max_rel_error": rep.max_rel_error}
    except DerivativeMismatch as exc:
        return {
            "ok": False,
            "error": "DerivativeMismatch",
            "evaluator": exc.evaluator,
            "rel_error": exc.rel_error,
            "message": str(exc),
        }


def cmd_verify(args):
    problem = build_problem(args)
    report = {"problem": args.problem, "fd": _fd_section(problem, args)}
    if args.fd_only or args.problem != "sphere":
        if not args.fd_only:
            report["skipped"] = "stationary set not enumerable for this problem; derivative checks only"
    else:
        obj, c, A = problem.obj, problem.c, problem.A
        consts = diagnostics.sphere_quadratic_constants(A)
        omega = diagnostics.stationary_points_sphere_quadratic(A)
        mu = consts["mu"]
        teb = diagnostics.verify_teb(obj, c, omega, args.samples, seed=args.seed)
        report["teb"] = {"mu_exact": mu, "mu_hat": teb.mu_hat, "n_used": teb.n_used,
                         "ok": bool(teb.mu_hat >= mu * (1 - 1e-9))}
        gamma0, _ = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
        grid = gamma0 * np.arange(1, 11) / 11.0
        geb = diagnostics.verify_geb(obj, c, omega, grid, max(1, args.samples // 50), mu=mu, seed=args.seed)
        report["geb"] = {"nu_hat": geb.nu_hat, "floor": geb.floor, "gamma0": geb.gamma0, "ok": geb.ok}
        sigma0, _ = diagnostics.nondegeneracy_check(obj, c, omega)
        report["nondegeneracy"] = {"sigma0": sigma0, "sigma0_exact": consts["sigma0"],
                                   "ok": bool(math.isfinite(sigma0))}
        led = ConstantsLedger(sigma0=consts["sigma0"], L1Fx=consts["L1Fx"], beta=args.beta)
        inv = diagnostics.inverse_bound_check(obj, c, omega, led, max(1, args.samples // 10), seed=args.seed)
        report["inverse_bound"] = {"beta": inv.beta, "radius": inv.radius, "bound": inv.bound,
                                   "max_ratio": inv.max_ratio, "violations": inv.violations, "ok": inv.ok}
    sections = [v for v in report.values() if isinstance(v, dict) and "ok" in v]
    report["ok"] = all(s["ok"] for s in sections)
    write_json(out_dir(args) / "report.json", report)
    for name, sec in report.items():
        if isinstance(sec, dict) and "ok" in sec:
            print(f"{name}: {'pass' if sec['ok'] else 'FAIL'}")
    return EXIT_OK if report["ok"] else EXIT_BUDGET


def sweep_grid(gamma_max, points, explicit=None):
    """Cell-midpoint grid ``gamma_max (i + 1/2) / points`` unless an explicit list is given."""
    if explicit is not None:
        return np.asarray(explicit, dtype=float)
    return gamma_max * (np.arange(points) + 0.5) / points


def _sweep_point(obj, c, x0, C, delta_f, g, gamma_max, max_steps):
    if not 0 < g < gamma_max:
        return {"gamma": g, "n1_actual": None, "n1_bound": None, "status": "rejected",
                "reason": f"gamma outside (0, gamma_max={gamma_max:.6g})"}
    bound = n1_bound(delta_f, g, obj.L1, C)
    try:
        _, tr = run_gpa(obj, c, x0, GpaConfig(g, C, max_steps=max_steps, descent_check=False))
        actual, status, reason = tr.phase("gpa")[-1].k, "ok", ""
    except MaxStepsExceeded:
        actual, status, reason = None, "budget", f"no switch within {max_steps} steps"
    return {"gamma": g, "n1_actual": actual, "n1_bound": bound, "status": status, "reason": reason}


def run_sweep(problem: Problem, x0, C, delta_f, grid, max_steps, workers=None):
    """Rows ``{gamma, n1_actual, n1_bound, status, reason}`` over the grid.

    Grid points run independently on a thread pool; rows come back in grid order.
    """
    obj, c = problem.obj, problem.c
    gamma_max, _ = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
    grid = [float(g) for g in grid]
    with ThreadPoolExecutor(max_workers=workers or min(len(grid), os.cpu_count() or 1) or 1) as pool:
        return list(pool.map(lambda g: _sweep_point(obj, c, x0, C, delta_f, g, gamma_max, max_steps), grid))


def cmd_sweep(args):
    problem = build_problem(args)
    obj, c = problem.obj, problem.c
    gamma_max, gamma_star = step_size_bounds(obj.L0, obj.L1, c.prox_radius)
    C = args.switch_c
    if C is None:
        led = build_ledger(args, problem)
        C = led.C if led.C is not None else compute_switch_constant(led)
    x0 = start_point(problem, args.seed)
    fmin = closed_form_fmin(problem)
    if fmin is None:
        raise ConfigError("sweep needs a known minimum value (sphere or stiefel problems)")
    delta_f = max(obj.f(x0) - fmin, 0.0)
    explicit = parse_spectrum(args.gammas) if args.gammas else None
    grid = sweep_grid(gamma_max, args.points, explicit)
    rows = run_sweep(problem, x0, C, delta_f, grid, args.max_steps)

    path = out_dir(args) / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(["" if r[col] is None else repr(r[col]) if col == "gamma" else r[col] for col in SWEEP_COLUMNS])
    valid = [r for r in rows if r["n1_bound"] is not None]
    summary = {"gamma_max": gamma_max, "gamma_star": gamma_star, "C": C, "delta_f": delta_f,
               "rejected": len(rows) - len(valid)}
    if valid:
        best = min(valid, key=lambda r: (r["n1_bound"], r["gamma"]))
        cell = float(np.max(np.diff(np.sort(grid)))) if len(grid) > 1 else math.inf
        summary.update(gamma_argmin=best["gamma"], cell=cell,
                       within_one_cell=bool(abs(best["gamma"] - gamma_star) <= cell * (1 + 1e-12)))
    write_json(out_dir(args) / "sweep_summary.json", summary)
    print(f"gamma*={gamma_star:.6g} argmin={summary.get('gamma_argmin')} rejected={summary['rejected']}")
    return EXIT_OK if valid else EXIT_CONFIG


# ---------------------------------------------------------------- argument parsing


def _common(p):
    p.add_argument("--config", help="JSON file whose keys provide defaults for these flags")
    p.add_argument("--problem", choices=("sphere", "stiefel", "custom"), default="sphere")
    p.add_argument("--spectrum", help="comma-separated eigenvalues, e.g. 1,2,4")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--plugin", help="module:callable returning a problem (with --problem custom)")
    p.add_argument("--eps", type=float, default=1e-10)
    p.add_argument("--gamma", type=float)
    p.add_argument("--switch-rule", choices=("residual", "step"), default="residual")
    p.add_argument("--switch-c", type=float, help="override the switching constant C")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="proxopt_out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--max-steps", type=int, default=100_000)


def make_parser():
    parser = argparse.ArgumentParser(prog="proxopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="gradient projection followed by modified Newton")
    _common(solve)
    verify = sub.add_parser("verify", help="error-bound, nondegeneracy and derivative checks")
    _common(verify)
    verify.add_argument("--fd-only", action="store_true")
    verify.add_argument("--samples", type=int, default=10_000)
    verify.add_argument("--fd-probes", type=int, default=5)
    sweep = sub.add_parser("sweep", help="step-count bound over a grid of step sizes")
    _common(sweep)
    sweep.add_argument("--points", type=int, default=50)
    sweep.add_argument("--gammas", help="explicit comma-separated step sizes")
    return parser, {"solve": solve, "verify": verify, "sweep": sweep}


def parse_args(argv):
    parser, subs = make_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        flat = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = set(flat) - known - {"ledger", "verbosity"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        sp.set_defaults(**{k: v for k, v in flat.items() if k in known})
        args = parser.parse_args(argv)
        args.ledger = flat.get("ledger")
        args.verbosity = flat.get("verbosity")
    else:
        args.ledger = None
        args.verbosity = None
    if args.problem == "custom" and not args.plugin:
        raise ConfigError("--problem custom requires --plugin module:callable")
    if args.ledger is not None:
        bad = set(args.ledger) - {f.name for f in dataclasses.fields(ConstantsLedger)}
        if bad:
            raise ConfigError(f"unknown ledger fields {sorted(bad)}")
    return args


def setup_logging(verbosity=None):
    level = (verbosity or os.environ.get("PROXOPT_LOG") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    setup_logging(args.verbosity)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BUDGET_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except CONFIG_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProxoptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
