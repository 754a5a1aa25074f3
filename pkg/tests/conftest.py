import os

import numpy as np
import pytest

from graph_io import read_mixture

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run acceptance-scale suites")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def pooled_separation_mixture():
    return read_mixture(os.path.join(FIXTURES_DIR, "pooled_separation_mixture.json"))


@pytest.fixture
def feedback_cycle_mixture():
    return read_mixture(os.path.join(FIXTURES_DIR, "feedback_cycle_mixture.json"))


@pytest.fixture
def false_collider_mixture():
    return read_mixture(os.path.join(FIXTURES_DIR, "false_collider_mixture.json"))
