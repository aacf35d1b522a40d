import pytest

_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {title}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
