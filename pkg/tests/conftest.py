import pytest

CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict per acceptance criterion for the summary."""
    def record(number, passed, detail):
        CRITERIA[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(CRITERIA[number])
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
