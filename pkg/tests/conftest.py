import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``; ``ok=None`` is informational."""
    def record(number: int, ok: bool | None, detail: str) -> bool | None:
        tag = "INFO" if ok is None else "PASS" if ok else "FAIL"
        _CRITERIA[number] = f"[{tag}] criterion {number}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
