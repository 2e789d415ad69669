import numpy as np
import pytest

from rerl_he.bench import PRESETS, calibrate_for
from rerl_he.mdp import GridWorldSpec, build_grid_world
from rerl_he.rerl import build_linear_system

GRID_S3 = GridWorldSpec(2, 2, (0, 0))
GRID_S7 = GridWorldSpec(3, 3, (1, 1), frozenset({(2, 2)}))


def grid_for_size(S: int) -> GridWorldSpec:
    """Small grids with exactly S non-absorbing cells."""
    return {
        1: GridWorldSpec(2, 1, (0, 1)),
        2: GridWorldSpec(3, 1, (0, 0)),
        3: GRID_S3,
        7: GRID_S7,
        15: GridWorldSpec(4, 4, (0, 0)),
    }[S]


def system_for(S: int, lam: float = 10.0):
    mdp = build_grid_world(grid_for_size(S))
    return mdp, build_linear_system(mdp, lam)


@pytest.fixture(scope="session")
def toy_bounds():
    """Toy-engine bounds calibrated at N=2^7, Δ=2^28 (100 trials)."""
    return calibrate_for(PRESETS[1])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(pytestconfig):
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        pytestconfig.stash[_VERDICTS].append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
