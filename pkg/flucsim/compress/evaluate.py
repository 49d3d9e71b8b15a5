#!/usr/bin/env python

"""Greedy rollout score of the designated model.

The owner's own per-TTI reward depends on where the owner stands, how
loaded its BS is and who currently owns the model, so it barely moves
with the hidden layer sizes. The evaluator instead freezes a copy of
the network when the designated model is first handed out and, at
every window end, replays the same stretch of TTIs from that copy:
UEs of the owner's traffic type act greedily with the designated
model, every other UE stays on its max-RSSI BS. Traffic, arrivals and
channels are identical in every replay, so differences between scores
come from the model alone.
"""

import copy
import numpy as np
from loguru import logger

from flucsim.nn.mlp import MlpModel
from flucsim.ran.world import RanWorld
from flucsim.utils.utils import ConfigurationError

logger = logger.bind(name="flucsim")


class GreedyEvaluator:
    """Score a model by a greedy rollout from a frozen world.

    Parameters
    ----------
    world: RanWorld
        Network to copy. The copy is taken at construction; later
        changes to `world` do not affect the score.
    traffic_type: int
        Traffic type whose UEs follow the model and whose rewards are
        averaged.
    ttis: int
        Length of each rollout.
    start_tti: int
        Index of the first replayed TTI (the next TTI of `world`).
    """
    def __init__(self, world: RanWorld, traffic_type: int, ttis: int, start_tti: int = 0):
        if ttis < 1:
            raise ConfigurationError("an evaluation rollout needs at least one TTI")
        self.snapshot = copy.deepcopy(world)
        self.traffic_type = int(traffic_type)
        self.ttis = int(ttis)
        self.start_tti = int(start_tti)
        self.evaluations = 0

    def _actions(self, world: RanWorld, model: MlpModel, observations) -> dict:
        greedy = {}
        steered = [uid for uid in sorted(world.ues) if world.ues[uid].traffic_type == self.traffic_type]
        if steered:
            qvalues = model.forward(np.stack([observations[uid] for uid in steered]))
            # argmax keeps the lowest index on ties
            greedy = dict(zip(steered, np.argmax(qvalues, axis=1).tolist()))
        return {
            uid: greedy[uid] if uid in greedy else world.max_rssi_bs(uid)
            for uid in sorted(world.ues)
        }

    def __call__(self, model: MlpModel) -> float:
        """Mean reward of the steered traffic type over one rollout."""
        world = copy.deepcopy(self.snapshot)
        observations = world.observations()
        rewards = []
        for tti in range(self.start_tti, self.start_tti + self.ttis):
            result = world.step(self._actions(world, model, observations), tti)
            rewards.extend(
                row["reward"] for row in result.rows if row["traffic_type"] == self.traffic_type)
            observations = result.states
        self.evaluations += 1
        if not rewards:
            logger.warning("no UE of the evaluated traffic type in the rollout; score 0")
            return 0.0
        return float(np.mean(rewards))
