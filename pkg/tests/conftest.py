import warnings
from pathlib import Path

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from billoc.config import make_config  # noqa: E402
from billoc.geometry import BilliardShape  # noqa: E402
from billoc.pipeline import Pipeline  # noqa: E402
from billoc.quantum import solve_window  # noqa: E402

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


# a desk-sized run with more than 500 spacings; about a minute
SMALL_RUN = dict(
    lambdas=(0.25,),
    k_windows=((60, 65), (65, 70), (70, 75), (75, 80), (80, 85), (85, 90)),
    grid_dims=(100, 100),
    ensemble_size=10_000,
    max_collisions=400,
    chaotic_collisions=200_000,
    window_states=50,
    A0="max",
)

SMALL_RUN_INI = """[run]
lambdas = 0.25
k_windows = 60:65, 65:70, 70:75, 75:80, 80:85, 85:90
grid_dims = 100, 100
ensemble_size = 10000
max_collisions = 400
chaotic_collisions = 200000
window_states = 50
A0 = max
"""


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def small_run(tmp_path_factory) -> Path:
    """Output directory of the small run, computed once with two workers."""
    out = tmp_path_factory.mktemp("small_run")
    Pipeline(make_config(**SMALL_RUN), out, threads=2).run()
    return out


@pytest.fixture(scope="session")
def circle():
    return BilliardShape(0.0)


@pytest.fixture(scope="session")
def quarter():
    return BilliardShape(0.25)


@pytest.fixture(scope="session")
def circle_window(circle):
    return solve_window(circle, 40.0, 42.0)


@pytest.fixture(scope="session")
def quarter_window(quarter):
    return solve_window(quarter, 60.0, 61.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
