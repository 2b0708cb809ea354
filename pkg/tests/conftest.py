"""Shared pytest plumbing: the acceptance-criterion result printer.

Acceptance tests report one pass/fail line per criterion via
``record_criterion``; the collected lines are printed in a dedicated section
of the terminal summary so the release checklist is readable at a glance.
"""

_CRITERIA: list = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    """Register one acceptance-criterion outcome for the terminal summary."""
    _CRITERIA.append((number, name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_CRITERIA):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{status}] {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
