import pytest

from bqpm import phasematch

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.when == "call":
        number, title = mark.args
        _CRITERIA.append((number, title, "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}")


@pytest.fixture(scope="session")
def reference_crystal():
    return phasematch.REFERENCE_CRYSTAL


@pytest.fixture(scope="session")
def matched(reference_crystal):
    return phasematch.matched_crystal(reference_crystal, phasematch.REFERENCE_PUMP_UM)
