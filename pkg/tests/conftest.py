import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance outcome: ``criterion(number, title, passed, detail)``."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        _RESULTS[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, detail = _RESULTS[number]
        flag = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{flag}] criterion {number:>2}: {title}" + (f" | {detail}" if detail else ""))
