import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_REPORT = []


def record(criterion, passed, detail=""):
    _REPORT.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(_REPORT, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
