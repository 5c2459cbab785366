import os

import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))

ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def _record(number: int, name: str, ok: bool, detail: str = ""):
        ACCEPTANCE[number] = (name, bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {name}: {detail}")
