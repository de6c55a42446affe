import numpy as np
import pytest

from hawkes_cascade.model import NetworkModel, PopulationParams, ExpSigmoid, paper_model

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def model():
    return paper_model(50, 50)


@pytest.fixture
def small_model():
    """eta = (1, 1), nu = (1, 1) with the exponential/sigmoid rates."""
    return NetworkModel((
        PopulationParams(1, 1.0, -1, 10, ExpSigmoid(10.0, 20.0)),
        PopulationParams(1, 1.0, 1, 10, ExpSigmoid(1.0, 20.0)),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
