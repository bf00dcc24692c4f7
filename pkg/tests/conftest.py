"""Shared fixtures: the bundled benchmark problems and hypothesis profiles."""

from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from nlcert.cli import load_problem

settings.register_profile(
    "ci", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.register_profile(
    "thorough", max_examples=300, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# Reference point used to seed the maxplus iteration on the Flyspeck instance.
FLYSPECK_X1 = (4.8684, 4.0987, 4.0987, 7.8859, 4.0987, 4.0987)


@pytest.fixture(scope="session")
def flyspeck():
    """Full Flyspeck 9922699028 objective l + arctan(d4 / sqrt(4 x1 delta))."""
    return load_problem("flyspeck9922.prob")


@pytest.fixture(scope="session")
def flyspeck_sa():
    """Its semialgebraic part in the sign used by the lifting benchmark."""
    return load_problem("flyspeck9922_sa.prob")


@pytest.fixture(scope="session")
def mc():
    return load_problem("mc.prob")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the slow relaxation-order-3 acceptance cases")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow case; run with --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
