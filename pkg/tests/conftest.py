"""Shared pytest wiring for the suite.

The acceptance tests report one verdict line per criterion.  File-descriptor
capture would swallow plain prints, so the lines are collected here and
echoed in a dedicated terminal-summary section at the end of every run.
"""

_verdicts = []


def record_verdict(line: str) -> None:
    _verdicts.append(line)


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance verdicts")
        for line in _verdicts:
            terminalreporter.write_line(line)
