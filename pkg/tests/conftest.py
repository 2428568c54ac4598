import pytest

_ACCEPTANCE: list[tuple[str, bool, str]] = []


class Criterion:
    """Collects the measured evidence for one acceptance criterion."""

    def __init__(self, name):
        self.name = name
        self.details = []

    def note(self, text):
        self.details.append(str(text))


@pytest.fixture
def criterion(request):
    c = Criterion(request.node.get_closest_marker("criterion").args[0])
    yield c
    rep = getattr(request.node, "rep_call", None)
    passed = rep is not None and rep.passed
    _ACCEPTANCE.append((c.name, passed, "; ".join(c.details)))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
