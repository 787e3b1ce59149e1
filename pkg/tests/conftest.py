import pytest

ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record ``(passed, detail)`` for an acceptance criterion before asserting on it."""
    def record(criterion: int, title: str, passed: bool, detail: str):
        ACCEPTANCE[criterion] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {title}: {detail}")
