"""Collect acceptance outcomes and print one PASS/FAIL line per criterion."""

import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.skipped or rep.failed):
        return
    number, title = marker.kwargs["criterion"], marker.kwargs["title"]
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    if rep.skipped and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2]
    results = item.config.stash[_RESULTS]
    # a failure in any phase sticks
    if results.get(number, ("", "PASS"))[1] != "FAIL":
        results[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, detail = results[number]
        line = f"criterion {number:>2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
