def pytest_terminal_summary(terminalreporter):
    from acceptance_log import VERDICTS

    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        status, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
