"""Shared pytest hooks.

When a run includes the end-to-end criteria module, append one line per
numbered criterion to the terminal summary so the whole pass/fail record is
readable without scrolling through the full -v output.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {status} - {detail}")
