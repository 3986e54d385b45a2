import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))  # makes the oracles module importable

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MINI_DIR = TESTS / "data" / "mini"

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, summary): acceptance criterion checked by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, summary = marker.args
    ok = call.excinfo is None
    prev = _CRITERIA.get(number)
    status = "PASS" if ok and (prev is None or prev[0] == "PASS") else "FAIL"
    _CRITERIA[number] = (status, summary)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, summary = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {summary}")
