"""Shared pytest wiring.

Acceptance tests append one human-readable PASS/FAIL line per criterion to
``acceptance_lines``; the hook below prints them after the run so they are
visible even with output capture enabled.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in acceptance_lines:
        terminalreporter.write_line(line)
