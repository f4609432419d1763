from __future__ import annotations

from support import CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
