import numpy as np
import pytest

from covextremes.distributions import child_stream


@pytest.fixture
def stream():
    return child_stream(12345, 99)


def pytest_configure(config):
    np.seterr(all="raise", under="ignore")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number].line())
