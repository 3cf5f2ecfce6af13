import pytest

_RESULTS = []


@pytest.fixture
def acceptance():
    """Record one acceptance line: ``record(number, passed, detail)``."""
    def record(number, passed, detail):
        _RESULTS.append((number, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, passed, detail in sorted(_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"AC-{number:<2} {'PASS' if passed else 'FAIL'}  {detail}")
