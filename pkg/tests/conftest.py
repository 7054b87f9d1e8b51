import numpy as np
import pytest

from nhcartan.dynamics import integrate
from nhcartan.scenarios import builtin

ACCEPTANCE_LINES: list[str] = []

_SCENARIOS: dict = {}
_TRAJECTORIES: dict = {}


def scenario(name):
    if name not in _SCENARIOS:
        _SCENARIOS[name] = builtin(name)
    return _SCENARIOS[name]


def trajectory(name, t_end=10.0, step=1e-3):
    """Default run of a built-in, shared across test modules."""
    key = (name, t_end, step)
    if key not in _TRAJECTORIES:
        sc = scenario(name)
        _TRAJECTORIES[key] = integrate(sc.system, sc.initial_state(), t_end, step)
    return _TRAJECTORIES[key]


@pytest.fixture
def particle():
    return scenario("nonholonomic_particle")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
