"""Acceptance reporting: one PASS/FAIL line per ``criterion``-marked test."""

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "passed": True, "ran": False, "detail": []})
    if call.when == "call" or call.excinfo is not None:
        entry["ran"] = True
        if call.excinfo is not None and not call.excinfo.errisinstance(AssertionError):
            entry["detail"].append(f"error: {call.excinfo.typename}: {call.excinfo.value}")
        if call.excinfo is not None:
            entry["passed"] = False
    if call.when == "call":
        entry["detail"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        r = _results[number]
        status = "PASS" if r["passed"] and r["ran"] else ("FAIL" if r["ran"] else "SKIP")
        tr.write_line(f"[{status}] {number}. {r['title']}")
        for d in r["detail"]:
            tr.write_line(f"       {d}")
