from __future__ import annotations

import os

import pytest

from sirwave import bounds, dispersion, profile
from sirwave.model import ModelParams, equilibria

os.environ.setdefault("LATTICE_WAVE_THREADS", "2")


@pytest.fixture(scope="session")
def std():
    return ModelParams()


@pytest.fixture(scope="session")
def crit(std):
    return dispersion.find_critical(std)


@pytest.fixture(scope="session")
def speed(crit):
    return 1.5 * crit.c_star


@pytest.fixture(scope="session")
def roots(std, speed, crit):
    return dispersion.find_roots(std, speed, crit)


@pytest.fixture(scope="session")
def env(std, speed, roots):
    return bounds.select_envelope(std, speed, roots)


@pytest.fixture(scope="session")
def eq(std):
    return equilibria(std)


@pytest.fixture(scope="session")
def solved40(std, speed, env):
    return profile.solve_fixed_point(std, speed, env, 40.0, 0.05, 1e-8)


@pytest.fixture(scope="session")
def solved80(std, speed, env):
    grid, report, _ = profile.extend_domain(std, speed, env, [40.0, 80.0], 0.05, 1e-8)
    return grid, report


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``acceptance(n, passed, detail)``; the line is printed immediately
    and again, sorted by criterion, in the terminal summary.
    """

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
