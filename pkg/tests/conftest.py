"""Shared test plumbing.

The acceptance tests record one line per criterion; the terminal-summary
hook reprints them after the run so the table is visible whether or not
output capture is on.
"""

_criterion_lines = []


def record_criterion(line: str):
    print(line)
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
