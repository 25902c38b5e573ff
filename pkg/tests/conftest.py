import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one summary line per acceptance criterion."""

    def record(number, status, detail):
        line = f"criterion {number}: {status} - {detail}"
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
