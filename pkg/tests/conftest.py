import numpy as np
import pytest

from proxopt import ProblemHints, estimate_ledger, sphere_quadratic, sphere_quadratic_constants


def exact_sphere_ledger(problem, beta=0.5):
    """Ledger built only from closed-form constants of a sphere quadratic."""
    consts = sphere_quadratic_constants(problem.A)
    consts["beta"] = beta
    led = estimate_ledger(problem.obj, problem.c, ProblemHints(closed_form=consts, beta=beta))
    return led


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sphere10():
    return sphere_quadratic(spectrum=np.arange(1.0, 11.0), seed=0)


@pytest.fixture(scope="session")
def sphere10_ledger(sphere10):
    return exact_sphere_ledger(sphere10)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when != "call" and outcome != "error":
                continue
            name = nodeid.split("::")[-1]
            num = int(name.split("_")[2])
            lines.append((num, f"criterion {num:2d}: {'PASS' if outcome == 'passed' else 'FAIL'}  ({name})"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
