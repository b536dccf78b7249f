"""
Pytest configuration and shared fixtures
"""
import numpy as np
import pytest

from tests.helpers import blob_dataset, small_config


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run desk-scale acceptance runs (minutes of CPU)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Fixed-seed generator for each test"""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Training config small enough to run in a couple of seconds"""
    return small_config()


@pytest.fixture
def blob_data():
    """60 partially labelled instances in 3 well separated classes"""
    return blob_dataset(n=60, n_classes=3, dim=4, separation=8.0, q=0.3, seed=3)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep DDMP_* variables from the developer shell out of the tests"""
    import os
    for key in list(os.environ):
        if key.upper().startswith("DDMP_"):
            monkeypatch.delenv(key, raising=False)
