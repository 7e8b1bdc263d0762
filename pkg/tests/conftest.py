import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def _report(number: int, title: str, ok: bool, detail: str):
        ACCEPTANCE_LINES.append(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        assert ok, detail

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
