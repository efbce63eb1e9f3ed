import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# acceptance criterion number -> (passed, description)
_AC_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or report.when != "call" and not report.failed:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_ac"):
        return
    num = int(name[len("test_ac"):].split("_", 1)[0])
    desc = name.split("_", 2)[-1].replace("_", " ")
    prev_ok, first_desc = _AC_RESULTS.get(num, (True, desc))
    _AC_RESULTS[num] = (prev_ok and not report.failed, first_desc)


def pytest_terminal_summary(terminalreporter):
    if not _AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_AC_RESULTS):
        ok, desc = _AC_RESULTS[num]
        terminalreporter.write_line(f"AC{num:<2} {'PASS' if ok else 'FAIL'}  {desc}")
