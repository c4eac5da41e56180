import pytest

RESULTS = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion; the summary prints one line per criterion."""

    def record(number, passed, detail):
        RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        passed, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}")
