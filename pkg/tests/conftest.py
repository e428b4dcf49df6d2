import numpy as np
import pytest

# One line per acceptance criterion, echoed after the run so the verdicts
# survive pytest's output capture.
_acceptance_lines = []


def record_acceptance(line):
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
