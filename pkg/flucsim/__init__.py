#!/usr/bin/env python

"""
Summary
-------
flucsim is a seeded discrete-event simulator of a two-tier radio access
network (one LTE macro cell and several NR small cells) in which every
UE steers its own traffic with an on-device DQN. Local models are
coordinated by grouped attention-weighted federated learning, newcomers
are jump-started by Q-value knowledge transfer, and the hidden layer
sizes are chosen by a grow-then-prune pre-simulation.

Example
-------
>>> import flucsim
>>> config = flucsim.RunConfig(algorithm="ktfluc", m_avg=10, ttis=2000)
>>> record = flucsim.run_experiment(config)
>>> record.summary()["mean_reward"]
"""

__version__ = "0.1.0"
__author__ = "flucsim developers"

from flucsim.config import RunConfig
from flucsim.nn.mlp import MlpModel, GradientTape
from flucsim.ran.world import RanWorld
from flucsim.agents.dqn import UeAgent
from flucsim.fed.coordinator import FederationCoordinator, GlobalModel
from flucsim.compress.controller import CompressionController
from flucsim.baselines import AlgorithmMode, Simulation
from flucsim.harness import run_experiment, run_compression, sweep, compare
from flucsim.utils.utils import FlucSimError
from flucsim.utils.logger_setup import set_log_level
set_log_level("WARNING")
