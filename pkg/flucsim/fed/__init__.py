#!/usr/bin/env python

"""
Grouped attention-weighted federation and newcomer initialization.
"""

from flucsim.fed.coordinator import (
    GlobalModel, FederationCoordinator, attention_weights, normalize_indicators,
)
