"""Shared pytest plumbing for the acceptance battery.

Acceptance tests record one line per criterion; the hook below echoes
them after the run, outside stdout capture, so the verdicts are visible
in plain ``pytest -v`` output.
"""

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.line(line)
