"""Collects the outcome of every ``acceptance``-marked test and prints one
PASS/FAIL line per criterion at the end of the run."""

import pytest

_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, text): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, text = marker.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        if report.passed:
            _RESULTS[cid] = ("PASS", text)
        elif report.skipped:
            _RESULTS[cid] = ("SKIP", text)
        else:
            _RESULTS[cid] = ("FAIL", text)


def _order(cid):
    head = "".join(ch for ch in cid if ch.isdigit())
    return int(head or 0), cid


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=_order):
        status, text = _RESULTS[cid]
        terminalreporter.write_line(f"{status}  [{cid}] {text}")
    n_pass = sum(1 for s, _ in _RESULTS.values() if s == "PASS")
    terminalreporter.write_line(f"{n_pass}/{len(_RESULTS)} criteria pass")
