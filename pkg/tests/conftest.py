"""Shared pytest plumbing: a criterion scoreboard printed after the run."""

CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Register one acceptance-criterion outcome for the terminal summary."""
    verdict = "PASS" if passed else "FAIL"
    line = f"CRITERION {number:2d}: {verdict} - {detail}"
    CRITERION_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(CRITERION_LINES):
        terminalreporter.write_line(CRITERION_LINES[number])
