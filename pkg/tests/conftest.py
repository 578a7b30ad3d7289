import pytest

# one verdict line per acceptance criterion, printed in the terminal summary
VERDICTS = {}


class Verdict:
    def __init__(self, number):
        self.number = number
        self.detail = ""

    def check(self, ok, detail):
        self.detail = detail
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail


@pytest.fixture
def verdict(request):
    number = request.node.get_closest_marker("criterion").args[0]
    v = Verdict(number)
    VERDICTS[number] = (v, None)
    yield v


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n = marker.args[0]
    v = VERDICTS.get(n, (None, None))[0]
    VERDICTS[n] = (v, rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(VERDICTS):
        v, passed = VERDICTS[n]
        detail = v.detail if v is not None else ""
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status} {detail}")
