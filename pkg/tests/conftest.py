"""Shared fixtures and the acceptance summary.

Tests marked ``@pytest.mark.acceptance(n, "title")`` are grouped by
criterion number; the terminal summary prints one PASS/FAIL line per
criterion, with any measured values a test attached through the
``measured`` fixture.
"""

from __future__ import annotations

from collections import defaultdict

import pytest

from damperkit.analysis import analyze_flow
from damperkit.config import bundled_config_path, load, paths_config
from damperkit.tfa import network_from_config

_OUTCOMES: dict[int, list[str]] = defaultdict(list)
_TITLES: dict[int, str] = {}
_DETAILS: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test backing one acceptance criterion")
    config.addinivalue_line("markers", "invariant: module invariant, also run as one acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            number, title = mark.args
            _TITLES[number] = title


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number = mark.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[number].append(report.outcome)
        for key, value in report.user_properties:
            if key == "measured":
                _DETAILS[number].append(value)


@pytest.fixture
def measured(record_property):
    """Attach a line of measured values to the acceptance summary."""

    def note(text: str) -> None:
        record_property("measured", text)

    return note


def pytest_terminal_summary(terminalreporter):
    if not _TITLES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_TITLES):
        outcomes = _OUTCOMES.get(number, [])
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"{status:<7} AC{number:<2} {_TITLES[number]}")
        for line in _DETAILS.get(number, []):
            tr.write_line(f"           {line}")


# -- bundled configurations ----------------------------------------------------


def _paths(name):
    return paths_config(load(bundled_config_path(name)))


@pytest.fixture(scope="session")
def ex1():
    return _paths("ex1")


@pytest.fixture(scope="session")
def ex2():
    return _paths("ex2")


@pytest.fixture(scope="session")
def ex3():
    return _paths("ex3")


@pytest.fixture(scope="session")
def ex1_analysis(ex1):
    return analyze_flow(ex1.flows[0])


@pytest.fixture(scope="session")
def ex2_analysis(ex2):
    return analyze_flow(ex2.flows[0])


@pytest.fixture(scope="session")
def ex3_analysis(ex3):
    return analyze_flow(ex3.flows[0])


@pytest.fixture(scope="session")
def orion():
    return network_from_config(load(bundled_config_path("orion")))
