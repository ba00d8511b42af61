from __future__ import annotations

import pytest

_OUTCOMES: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when == "setup" and report.passed) or report.when == "teardown":
        return
    number, title = mark.args
    entry = _OUTCOMES.setdefault(number, {"title": title, "passed": True, "ran": False, "notes": []})
    if report.skipped:
        entry["notes"].append(f"{item.name} skipped")
        return
    entry["ran"] = True
    if report.failed:
        entry["passed"] = False
        entry["notes"].append(f"{item.name} failed")
    for key, value in item.user_properties:
        if key == "measure":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        e = _OUTCOMES[number]
        verdict = "PASS" if e["passed"] and e["ran"] else ("FAIL" if e["ran"] else "SKIP")
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"[{verdict}] {number:2d}. {e['title']}" + (f"  ({notes})" if notes else ""))
