"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
import re

import pytest

DETAILS = {}
OUTCOMES = {}
_CRITERION = re.compile(r"test_criterion_(\d+)_")


@pytest.fixture
def report(request):
    """Call ``report("...")`` inside a criterion test to attach a one-line measurement."""
    m = _CRITERION.search(request.node.name)

    def note(text):
        if m:
            DETAILS[int(m.group(1))] = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.search(item.name)
    if m and (rep.when == "call" or rep.failed):
        n = int(m.group(1))
        OUTCOMES[n] = OUTCOMES.get(n, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(OUTCOMES):
        status = "PASS" if OUTCOMES[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {DETAILS.get(n, '')}".rstrip())
