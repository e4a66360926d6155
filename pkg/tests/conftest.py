import pytest

_LINES = []


@pytest.fixture
def report():
    """Print an acceptance line now and again in the terminal summary."""
    def emit(res):
        line = res.line()
        print(line)
        _LINES.append((res.number, line))
        return res
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
