#!/usr/bin/env python

"""
Minimal numpy neural network with PoZ statistics and split/prune edits.
"""

from flucsim.nn.mlp import MlpModel, GradientTape
from flucsim.nn.snapshot import write_snapshot, read_snapshot
