import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = marker.args
    details = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    prev = _RESULTS.get(number)
    if prev is None or prev[0] == "PASS":
        _RESULTS[number] = (status, title, details)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, details = _RESULTS[number]
        line = f"criterion {number} [{status}] {title}"
        terminalreporter.write_line(line + (f" :: {details}" if details else ""))
