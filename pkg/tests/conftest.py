import numpy as np
import pytest

from fiberpiano.config import ExperimentConfig
from fiberpiano.experiments import Setup
from fiberpiano.modes import FiberSpec, GridSpec, build_mode_basis


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def setup(default_cfg):
    return Setup(default_cfg)


@pytest.fixture(scope="session")
def basis():
    return build_mode_basis(FiberSpec(), GridSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -----------------------------------------------------------
# test_acceptance.py records one line per criterion; they are echoed at the end
# of the run so the verdicts appear even when output capture is on.

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
