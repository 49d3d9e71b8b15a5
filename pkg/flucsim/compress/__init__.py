#!/usr/bin/env python

"""
Grow/prune model compression driven by per-neuron PoZ.
"""

from flucsim.compress.controller import (
    CompressionSchedule, CompressionController, grow_step, prune_step, effectiveness,
)
from flucsim.compress.evaluate import GreedyEvaluator
