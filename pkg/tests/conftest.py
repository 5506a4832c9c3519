from hypothesis import settings

# Oracles are compiled on first use; wall-clock deadlines would flag the compile.
settings.register_profile("default", deadline=None)
settings.load_profile("default")

import pytest

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.fixture
def criterion():
    """``criterion(name, passed, detail)`` records one acceptance line."""
    def record(name: str, passed, detail: str = ""):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        _CRITERIA.append((status, name, detail))
        print(f"[{status}] {name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
