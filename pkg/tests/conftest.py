import warnings

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    # cvxpy flags near-optimal solves as "may be inaccurate"; the tolerances are checked explicitly
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
