import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the assertion itself stays in the test.

    A criterion checked by several parametrized runs passes only if all of
    them pass, and its line joins their details.
    """

    def record(number, ok, detail):
        prev_ok, prev = _ACCEPTANCE.get(number, (True, ""))
        _ACCEPTANCE[number] = (prev_ok and bool(ok), f"{prev}; {detail}" if prev else detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
