#!/usr/bin/env python

"""Simulation loop shared by KT-FLUC and the comparison algorithms.

Every mode runs the same world and the same per-TTI order: act, step,
record, train, handle departures and arrivals, federate. Modes differ
only in how UEs decide and learn:

    ktfluc   local + frozen expert Q-values, federation installs experts,
             newcomers copy the global model into local and expert
    fli      federation blends local models, newcomers copy the global model
    fl       federation blends local models, newcomers start at random
    dil      independent local learning, no federation
    cl       one cell-centric DQN steering every UE
    maxrssi  every UE stays on its strongest BS, no learning
"""

import time
from enum import Enum
from typing import Dict, Optional
import numpy as np
from loguru import logger

from flucsim.agents.central import CentralAgent
from flucsim.agents.dqn import UeAgent
from flucsim.compress.controller import CompressionController, effectiveness
from flucsim.compress.evaluate import GreedyEvaluator
from flucsim.config import RunConfig
from flucsim.fed.coordinator import FederationCoordinator, GROUP_NAMES
from flucsim.metrics import MetricsRecord
from flucsim.nn.mlp import MlpModel
from flucsim.nn.snapshot import read_snapshot
from flucsim.ran.world import RanWorld, StepResult
from flucsim.utils.utils import ConfigurationError

logger = logger.bind(name="flucsim")


class AlgorithmMode(Enum):
    KT_FLUC = "ktfluc"
    FL = "fl"
    FLI = "fli"
    DIL = "dil"
    CL = "cl"
    MAX_RSSI = "maxrssi"

    @property
    def federated(self) -> bool:
        return self in (AlgorithmMode.KT_FLUC, AlgorithmMode.FL, AlgorithmMode.FLI)

    @property
    def transfer(self) -> bool:
        """Uses expert models in action selection and training."""
        return self is AlgorithmMode.KT_FLUC

    @property
    def newcomer_init(self) -> bool:
        return self in (AlgorithmMode.KT_FLUC, AlgorithmMode.FLI)


class Simulation:
    """One run of the network under a single algorithm.

    Parameters
    ----------
    config: RunConfig
        Scenario and algorithm settings.
    compress: bool
        Run the grow/prune pre-simulation: the first UE's local model is
        replaced by a small designated model that is grown and pruned,
        and handed to the next arriving UE of the same traffic type when
        its owner departs. Each window is scored by a GreedyEvaluator
        rollout unless config.compression_eval_ttis is 0.
        Requires a per-UE mode without federation (dil).

    Example
    -------
    >>> sim = Simulation(RunConfig(algorithm="dil", ttis=500))
    >>> record = sim.run()
    >>> record.summary()["mean_reward"]
    """
    def __init__(self, config: RunConfig, compress: bool = False):
        self.config = config
        self.mode = AlgorithmMode(config.algorithm)
        if compress and self.mode is not AlgorithmMode.DIL:
            raise ConfigurationError("the compression pre-simulation runs in dil mode")

        self.record = MetricsRecord(config.ttis, config.fed_interval)
        self.agents: Dict[int, UeAgent] = {}
        self.coordinator: Optional[FederationCoordinator] = None
        self.central: Optional[CentralAgent] = None
        self.compressor: Optional[CompressionController] = None
        self.compress_owner: Optional[int] = None
        self.compress_type: Optional[int] = None
        self.template: Optional[MlpModel] = None
        self.seconds = {"federation": 0.0, "transfer": 0.0}
        self._slot_actions = None
        self._cell_state = None
        self._valid = None

        self._set_template()
        self.world = RanWorld(config)
        if self.mode.federated:
            self.coordinator = FederationCoordinator.from_config(config, transfer=self.mode.transfer)
        if self.mode is AlgorithmMode.CL:
            self.central = CentralAgent.from_config(
                config, config.rng("exploration", 0), model=self.template)
        if compress:
            sizes = [config.state_dim, *config.compression_start_sizes, config.n_bs]
            model = MlpModel(sizes, rng=config.rng("compression"))
            self.compressor = CompressionController.from_config(config, model)

        for ue_id in sorted(self.world.ues):
            self._admit(ue_id, newcomer=False, tti=0)
        self.observations: Dict[int, np.ndarray] = self.world.observations()

    def _set_template(self):
        """Load a model snapshot used to initialize every new model."""
        if not self.config.load_model:
            return
        model = read_snapshot(self.config.load_model)
        if self.mode is AlgorithmMode.CL:
            expected = (self.config.n_cl_slots * (self.config.state_dim + 1),
                        self.config.n_cl_slots * self.config.n_bs)
        else:
            expected = (self.config.state_dim, self.config.n_bs)
        if (model.input_dim, model.output_dim) != expected:
            raise ConfigurationError(
                f"loaded model {model.layer_sizes} does not fit input/output {expected}")
        self.template = model

    def _new_model(self, ue_id: int) -> MlpModel:
        if self.template is not None:
            return self.template.copy()
        return MlpModel(self.config.layer_sizes, rng=self.config.rng("init", ue_id))

    # ----------------------------------------------------------------
    # population changes
    # ----------------------------------------------------------------

    def _admit(self, ue_id: int, newcomer: bool, tti: int):
        if self.mode is AlgorithmMode.MAX_RSSI:
            return
        if self.mode is AlgorithmMode.CL:
            self.central.assign(ue_id)
            return

        ue = self.world.ues[ue_id]
        agent = UeAgent.from_config(
            ue_id, ue.traffic_type, self._new_model(ue_id),
            self.config.rng("exploration", ue_id), self.config)
        if self.mode.transfer:
            agent.set_expert(agent.local_model)
        if newcomer and self.mode.newcomer_init:
            start = time.perf_counter()
            self.coordinator.init_newcomer(agent, transfer=self.mode.transfer)
            self.seconds["transfer"] += time.perf_counter() - start
        if self._takes_designated_model(ue.traffic_type):
            self._hand_designated_model(agent, tti)
        self.agents[ue_id] = agent

    def _takes_designated_model(self, traffic_type: int) -> bool:
        """The designated model stays with one traffic type."""
        if self.compressor is None or self.compress_owner is not None:
            return False
        return self.compress_type is None or traffic_type == self.compress_type

    def _hand_designated_model(self, agent: UeAgent, tti: int):
        agent.local_model = self.compressor.model
        agent.record_poz = True
        self.compress_owner = agent.ue_id
        if self.compress_type is None:
            self.compress_type = agent.traffic_type
            if self.config.compression_eval_ttis:
                self.compressor.evaluator = GreedyEvaluator(
                    self.world, agent.traffic_type, self.config.compression_eval_ttis, start_tti=tti)
        logger.debug(f"designated model handed to UE {agent.ue_id} at TTI {tti}")

    def _depart(self, ue_id: int):
        if self.central is not None:
            self.central.release(ue_id)
        agent = self.agents.pop(ue_id, None)
        if agent is not None and ue_id == self.compress_owner:
            self.compress_owner = None

    # ----------------------------------------------------------------
    # the per-TTI stages
    # ----------------------------------------------------------------

    def _act(self) -> Dict[int, int]:
        if self.mode is AlgorithmMode.MAX_RSSI:
            return {uid: self.world.max_rssi_bs(uid) for uid in sorted(self.world.ues)}
        if self.mode is AlgorithmMode.CL:
            self._cell_state, self._slot_actions, decisions = self.central.decide(self.observations)
            self._valid = self.central.valid_mask()
            return decisions
        actions = {}
        for uid in sorted(self.agents):
            agent = self.agents[uid]
            state = self.observations[uid]
            if self.mode.transfer:
                actions[uid] = agent.select_action_transfer(state)
            else:
                actions[uid] = agent.select_action_local(state)
        return actions

    def _learn(self, result: StepResult, actions: Dict[int, int]):
        if self.mode is AlgorithmMode.CL:
            slotted = [uid for uid in self.central.slots if uid is not None and uid in result.rewards]
            reward = self.central.cell_reward([result.rewards[uid] for uid in slotted])
            next_state = self.central.cell_state(result.states)
            self.central.remember(
                self._cell_state, next_state, self._slot_actions, self._valid, reward)
            self.central.train()
            return

        for uid in sorted(self.agents):
            if uid not in result.rewards:
                continue
            agent = self.agents[uid]
            agent.remember(
                self.observations[uid], result.states[uid], actions[uid],
                result.rewards[uid], result.eligible[uid])
            if self.mode.transfer:
                agent.train_transfer()
            else:
                agent.train_local()
            if uid == self.compress_owner:
                self.compressor.observe(result.tti, result.rewards[uid])

    def _federate(self, tti: int):
        start = time.perf_counter()
        self.coordinator.federate(tti, self.agents)
        self.seconds["federation"] += time.perf_counter() - start

    def step(self, tti: int) -> StepResult:
        """Run one TTI of the selected algorithm."""
        if self.coordinator is not None:
            start = time.perf_counter()
            self.coordinator.land_pending(tti, self.agents)
            self.seconds["federation"] += time.perf_counter() - start

        actions = self._act()
        result = self.world.step(actions, tti)
        self.record.extend(result.rows)
        if self.mode is not AlgorithmMode.MAX_RSSI:
            self._learn(result, actions)

        for uid in result.departed:
            self._depart(uid)
        for uid in result.arrived:
            self._admit(uid, newcomer=True, tti=tti + 1)
        self.observations = {uid: result.states[uid] for uid in sorted(self.world.ues)}

        if self.coordinator is not None and self.coordinator.due(tti):
            self._federate(tti)
        return result

    def run(self, ttis: Optional[int] = None, stop_when_compressed: bool = False) -> MetricsRecord:
        """Simulate `ttis` TTIs (default: config.ttis) and return the record."""
        ttis = self.config.ttis if ttis is None else ttis
        self.record.ttis = ttis
        logger.info(
            f"running {self.mode.value} for {ttis} TTIs "
            f"(m_avg={self.config.m_avg}, seed={self.config.seed})")
        start = time.perf_counter()
        for tti in range(ttis):
            self.step(tti)
            if stop_when_compressed and self.compressor is not None and self.compressor.complete:
                self.record.ttis = tti + 1
                logger.info(f"compression finished at TTI {tti}; stopping")
                break
        if self.coordinator is not None:
            self.coordinator.close(self.agents)
        total = time.perf_counter() - start
        self._finish(total)
        logger.info(f"finished {self.mode.value}: {len(self.record.rows)} rows")
        return self.record

    def _finish(self, total: float):
        record = self.record
        counters = dict(self.world.audit)
        counters["bytes_generated"] = self.world.bytes_generated
        counters["bytes_delivered"] = self.world.bytes_delivered
        counters["departures"] = self.world.n_departed
        if self.coordinator is not None:
            record.federation = list(self.coordinator.log)
            record.fed_snapshots = list(self.coordinator.snapshots)
            counters["excluded_groups"] = self.coordinator.excluded_groups
            self.seconds["transfer"] += self.coordinator.transfer_seconds
            self.seconds["federation"] -= self.coordinator.transfer_seconds
        if self.central is not None:
            counters["cl_overflow"] = self.central.overflow
        record.counters = counters

        record.timing = {
            "federation_s": max(self.seconds["federation"], 0.0),
            "transfer_s": self.seconds["transfer"],
            "total_s": total,
        }
        record.timing["other_s"] = max(
            total - record.timing["federation_s"] - record.timing["transfer_s"], 0.0)

        if self.compressor is not None:
            record.compression = list(self.compressor.history)
            record.effectiveness = effectiveness(
                self.compressor.history, self.config.effectiveness_threshold)
            record.final_models["compressed"] = self.compressor.model.copy()
        elif self.coordinator is not None:
            for group, model in self.coordinator.global_model.models.items():
                if model is not None:
                    record.final_models[f"global_{GROUP_NAMES[group]}"] = model.copy()
        elif self.central is not None:
            record.final_models["central"] = self.central.model.copy()
        else:
            for uid, agent in sorted(self.agents.items()):
                record.final_models[f"ue{uid}"] = agent.local_model.copy()


def run_mode(config: RunConfig, mode: AlgorithmMode) -> MetricsRecord:
    """Run config under the given algorithm."""
    return Simulation(config.replace(algorithm=AlgorithmMode(mode).value)).run()


def run_dil(config: RunConfig) -> MetricsRecord:
    return run_mode(config, AlgorithmMode.DIL)


def run_cl(config: RunConfig) -> MetricsRecord:
    return run_mode(config, AlgorithmMode.CL)


def run_fl(config: RunConfig) -> MetricsRecord:
    return run_mode(config, AlgorithmMode.FL)


def run_fli(config: RunConfig) -> MetricsRecord:
    return run_mode(config, AlgorithmMode.FLI)


def run_ktfluc(config: RunConfig) -> MetricsRecord:
    return run_mode(config, AlgorithmMode.KT_FLUC)
