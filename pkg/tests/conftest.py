"""Shared pytest hooks: print the acceptance verdicts after the run."""

ACCEPTANCE_VERDICTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_VERDICTS):
        terminalreporter.write_line(ACCEPTANCE_VERDICTS[key])
