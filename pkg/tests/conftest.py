import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.fixture
def criterion(request):
    """Recorder for one acceptance criterion; reports FAIL if the test dies before recording."""
    mark = request.node.get_closest_marker("criterion")
    number, title = mark.args

    def record(passed, detail):
        _RESULTS[number] = (title, bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")

    yield record
    if number not in _RESULTS:
        _RESULTS[number] = (title, False, "errored before producing a result")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, detail = _RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail}")
