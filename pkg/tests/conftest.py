import numpy as np
import pytest

from cavispec.problem import ProblemConfig, solve_problem

from ._invariants import check_history

_CRITERIA = []


@pytest.fixture(scope="session")
def criterion_log():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


_SOLVES = {}


def cached_solve(config: ProblemConfig):
    """Solve once per configuration per session; every history is checked for the solver invariants."""
    key = repr(config.to_dict())
    if key not in _SOLVES:
        sol = solve_problem(config)
        check_history(sol.report, config.solver_config())
        _SOLVES[key] = sol
    return _SOLVES[key]


@pytest.fixture(scope="session")
def solve_cached():
    return cached_solve


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
