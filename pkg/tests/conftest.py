import pytest

_RESULTS: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, name: str, ok: bool, detail: str = "") -> None:
        _RESULTS[f"{number:02d}"] = ("PASS" if ok else "FAIL", f"[{number}] {name}: {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS):
        status, line = _RESULTS[key]
        terminalreporter.write_line(f"{status} {line}")
