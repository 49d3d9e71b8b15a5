#!/usr/bin/env python

"""
Exceptions and small numeric helpers shared across flucsim.
"""

from typing import Sequence
import numpy as np


class FlucSimError(Exception):
    def __init__(self, *args, **kwargs):
        Exception.__init__(self, *args, **kwargs)


class ConfigurationError(FlucSimError):
    """Invalid configuration, shape mismatch or out-of-range index."""


class StatisticError(FlucSimError):
    """A statistic was requested over an empty accumulation window."""


class PruneRefusedError(FlucSimError):
    """Removing the neuron would take a layer below its width floor."""


def db_to_linear(value_db):
    """Convert decibels to a linear power ratio."""
    return np.power(10.0, np.asarray(value_db, dtype=float) / 10.0)


def linear_to_db(value):
    """Convert a linear power ratio to decibels."""
    return 10.0 * np.log10(np.asarray(value, dtype=float))


def dbm_to_watts(value_dbm):
    """Convert dBm to watts."""
    return db_to_linear(value_dbm) / 1000.0


def watts_to_dbm(value_w):
    """Convert watts to dBm."""
    return linear_to_db(np.asarray(value_w, dtype=float) * 1000.0)


def argmax_lowest(values: Sequence[float]) -> int:
    """Index of the maximum, ties broken toward the lowest index."""
    # np.argmax already returns the first occurrence of the maximum
    return int(np.argmax(np.asarray(values)))
