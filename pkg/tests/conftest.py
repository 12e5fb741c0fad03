"""Shared pytest wiring: surfaces the acceptance-criteria PASS lines.

The acceptance tests append one line per criterion to their module-level
``PASS_LINES``; printing them here, after the run, keeps them visible in
ordinary ``pytest -v`` output despite capture.
"""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "PASS_LINES", None) if module else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
