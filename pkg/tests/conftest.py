"""Collects the one-line verdicts of the acceptance criteria and prints them
at the end of the session."""

VERDICTS = {}


def record_verdict(number, passed, detail):
    VERDICTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        passed, detail = VERDICTS[number]
        terminalreporter.write_line(
            f"criterion {number:>4g}: {'PASS' if passed else 'FAIL'}  {detail}")
