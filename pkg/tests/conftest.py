import pytest

_VERDICTS = pytest.StashKey[dict]()


def _lines(config) -> dict:
    if _VERDICTS not in config.stash:
        config.stash[_VERDICTS] = {}
    return config.stash[_VERDICTS]


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the test's acceptance criterion, then assert it."""
    number = request.node.get_closest_marker("acceptance").args[0]

    def record(ok: bool, detail: str):
        _lines(request.config)[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" or not rep.failed:
        return
    lines = _lines(item.config)
    number = marker.args[0]
    if number not in lines:
        lines[number] = f"criterion {number:>2}: FAIL  raised {call.excinfo.typename}: {call.excinfo.value}"


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
