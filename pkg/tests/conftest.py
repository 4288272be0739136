import systems


def pytest_terminal_summary(terminalreporter):
    if systems.ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(systems.ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
