import re

_CRITERIA: dict[int, tuple[str, float, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    prev = _CRITERIA.get(k, ("PASS", 0.0, m.group(2)))
    status = prev[0]
    if report.failed:
        status = "FAIL"
    elif report.skipped and report.when == "setup":
        status = "SKIP"
    _CRITERIA[k] = (status, prev[1] + report.duration, prev[2])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, secs, name = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {status} ({secs:.1f}s) {name.replace('_', ' ')}")
