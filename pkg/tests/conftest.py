CRITERIA = {}


def record(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
    CRITERIA[number] = line
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
