import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class _Verdict:
    def __call__(self, label: str, ok: bool, detail: str = "") -> None:
        ok = bool(ok)
        _VERDICTS.append((label, ok, detail))
        assert ok, f"{label}: {detail}"


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""
    return _Verdict()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _VERDICTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
