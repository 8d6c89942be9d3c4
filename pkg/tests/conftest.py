"""Shared pytest hooks for the test suite."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-criterion PASS/FAIL lines after the run.

    Pytest captures stdout from passing tests, so the one-line verdicts
    printed by ``report`` in test_acceptance.py would otherwise only be
    visible on failure.
    """
    try:
        from test_acceptance import REPORT_LINES
    except ImportError:
        return
    if not REPORT_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in REPORT_LINES:
        terminalreporter.line(line)
