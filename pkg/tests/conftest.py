import pytest

RESULTS = {}


def report(criterion, ok, detail):
    """Record one acceptance line; printed in the terminal summary."""
    RESULTS[criterion] = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[criterion])
    return ok


@pytest.fixture
def accept():
    return report


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
