import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """``report(n, ok, detail)``: record one PASS/FAIL line and fail the test if not ok."""

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _RESULTS[number] = line
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
