"""Shared pytest wiring for the acceptance checks.

Acceptance tests record one outcome line each through the ``acceptance``
fixture; this hook prints them as a block at the end of the run so the
pass/fail status of every criterion is visible in one place.
"""

import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one acceptance-criterion outcome and fail the test if unmet."""

    def record(number: int, name: str, passed: bool, detail: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        suffix = f": {detail}" if detail else ""
        _ACCEPTANCE_LINES.append(f"criterion {number} {status}  {name}{suffix}")
        assert passed, f"acceptance criterion {number} ({name}) failed{suffix}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
