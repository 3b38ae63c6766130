import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import helpers

    if helpers.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(helpers.ACCEPTANCE_LINES):
            terminalreporter.write_line(helpers.ACCEPTANCE_LINES[n])
