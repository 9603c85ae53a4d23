from __future__ import annotations

import pytest

from diode_qopt.material import MaterialParams
from diode_qopt.poisson import DiodeDesign, depletion_profile, solve_poisson

# filled by test_acceptance.py, printed at the end of the session
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def material():
    return MaterialParams()


@pytest.fixture(scope="session")
def baseline():
    return DiodeDesign()


@pytest.fixture(scope="session")
def solved():
    """Memoized solves keyed by design; shared across test modules."""
    cache = {}

    def get(design, grid=None):
        key = (design, grid)
        if key not in cache:
            sol = solve_poisson(design, MaterialParams(), grid)
            cache[key] = (sol, depletion_profile(sol, design, MaterialParams()))
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
