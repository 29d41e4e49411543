import pytest

from vgkinetic import fpsolver
from vgkinetic.grid import GridSpec
from vgkinetic.model import ModelParams

ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, passed: bool, detail: str, seconds: float) -> str:
    line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail} ({seconds:.1f}s)"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def small_op(params):
    return fpsolver.assemble(params, GridSpec(40, 40, 8.0))


@pytest.fixture(scope="session")
def small_steady(small_op):
    return fpsolver.steady_state(small_op)
