#!/usr/bin/env python

"""Shared fixtures and the --runslow switch for long acceptance runs."""

import numpy as np
import pytest

from flucsim.config import RunConfig


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run long acceptance simulations")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance simulation")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    """A light scenario that runs a few hundred TTIs in seconds."""
    return RunConfig(
        seed=7, ttis=200, m_avg=4, batch_size=16, buffer_size=50, fed_interval=30)


@pytest.fixture
def empty_config():
    """No shadowing and practically no arrivals, for hand-built worlds."""
    return RunConfig(seed=1, m_avg=1e-6, shadowing_sigma_db=0.0)
