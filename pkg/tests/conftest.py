"""Collects one verdict line per acceptance criterion for the terminal summary."""

import pytest

_VERDICTS: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when != "call" and rep.passed:
        return
    number, title = marker.args
    if rep.passed:
        status = "PASS"
    elif rep.skipped:
        status = "NOT VERIFIED"
    else:
        status = "FAIL"
    detail = dict(item.user_properties).get("detail", "")
    if rep.skipped and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2].removeprefix("Skipped: ")
    _VERDICTS[number] = f"criterion {number:2d} [{status}] {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])
