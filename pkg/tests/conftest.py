import numpy as np
import pytest

from ldthermo import builtin_model


@pytest.fixture
def ou():
    return builtin_model("ou1d", {"b": 1.0, "D": 1.0})


@pytest.fixture
def lin2():
    return builtin_model("linear2d", {"kappa": 1.0, "omega": 2.0})


@pytest.fixture
def dwell():
    return builtin_model("doublewell1d")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    _CRITERIA[number] = (title, rep.passed, detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail, secs = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}  ({secs:.1f} s)  {detail}")
