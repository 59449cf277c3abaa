from collections import defaultdict

import pytest

_ACCEPTANCE = defaultdict(list)


@pytest.fixture
def record():
    """Store one acceptance check as (criterion, label, passed, detail) for the run summary."""

    def _record(criterion: int, label: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[criterion].append((label, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = "; ".join(f"{label}: {'ok' if ok else 'FAILED'} ({detail})" for label, ok, detail in checks)
        terminalreporter.write_line(f"criterion {criterion}: {verdict} - {parts}")
