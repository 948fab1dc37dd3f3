import numpy as np
import pytest

from lqg_adapt.bench import bundled_config_path, load_config
from lqg_adapt.plant import CostParams, NoiseParams, SystemParams


@pytest.fixture(scope="session")
def webserver():
    return load_config(bundled_config_path())


@pytest.fixture
def scalar_system():
    return SystemParams([[0.5]], [[1.0]], [[1.0]])


@pytest.fixture
def unit_noise():
    return NoiseParams(1.0, 1.0)


@pytest.fixture
def unit_cost():
    return CostParams([[1.0]], [[1.0]])


def random_stable_system(rng, n_x, n_u=1, n_y=1, radius=0.9):
    """Random controllable/observable system with spectral radius below ``radius``."""
    while True:
        A = rng.standard_normal((n_x, n_x))
        A *= rng.uniform(0.2, radius) / max(abs(np.linalg.eigvals(A)))
        sys = SystemParams(A, rng.standard_normal((n_x, n_u)), rng.standard_normal((n_y, n_x)))
        if not sys.failed_assumptions():
            return sys


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record(number: int, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
    print(ACCEPTANCE[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
