import numpy as np
import pytest

from bipfit import FittingProblem

import oracles


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def fast_problem():
    return FittingProblem(oracles.FAST_X0, oracles.FAST_A, oracles.FAST_A)


@pytest.fixture
def slow_problem():
    return FittingProblem(oracles.SLOW_X0, oracles.SLOW_A, oracles.SLOW_A)


@pytest.fixture
def divergence_problem():
    return FittingProblem(oracles.DIV_X0, oracles.DIV_A, oracles.DIV_A)


@pytest.fixture
def grid_problem():
    return oracles.grid_problem()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            when = getattr(rep, "when", "call")
            if "test_acceptance.py::test_criterion_" in nodeid and when == "call":
                name = nodeid.split("::")[-1]
                results[name] = outcome
    # setup/collection errors for acceptance tests should still surface
    for rep in terminalreporter.stats.get("error", []):
        nodeid = getattr(rep, "nodeid", "")
        if "test_acceptance.py::test_criterion_" in nodeid:
            results.setdefault(nodeid.split("::")[-1], "error")
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    def criterion_number(name):
        return int(name.split("_")[2])
    for name in sorted(results, key=criterion_number):
        verdict = "PASS" if results[name] == "passed" else "FAIL"
        label = name.replace("test_criterion_", "criterion ")
        number, _, rest = label.partition("_")
        terminalreporter.write_line(
            f"{number} ({rest.replace('_', ' ')}): {verdict}"
        )
