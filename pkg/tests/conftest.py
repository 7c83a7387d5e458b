from __future__ import annotations

import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Lines are printed immediately (visible with ``-s``) and repeated in the
    terminal summary. Returns ``ok`` so tests can ``assert criterion(...)``.
    """
    lines = request.config.stash.setdefault(_RESULTS, [])

    def record(number, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
