import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("lab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion, summarised at the end")


def pytest_runtest_logreport(report):
    label = report.user_properties and dict(report.user_properties).get("acceptance")
    if not label:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[label] = "PASS" if report.outcome == "passed" else "FAIL"


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("acceptance")
    if mark:
        item.user_properties.append(("acceptance", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("ab")), s)):
        terminalreporter.write_line(f"{_ACCEPTANCE[label]}  {label}")
