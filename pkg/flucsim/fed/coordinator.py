#!/usr/bin/env python

"""Grouped attention-weighted federation.

UEs are split into a GBR and a non-GBR group. At every federation
boundary each member reports three indicators (mean reward, amount of
training data, eligible fraction). Indicators are max-normalized inside
the group, averaged, and turned into attention weights with a softmax.
The group's global model moves toward the weighted sum of the local
models, and is then pushed back: blended into local models (FL, FLI)
or installed as the frozen expert (KT-FLUC).
"""

import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import numpy as np
from scipy.special import softmax
from loguru import logger

from flucsim.agents.dqn import UeAgent
from flucsim.nn.mlp import MlpModel
from flucsim.ran.entities import GBR, NON_GBR
from flucsim.utils.utils import ConfigurationError

logger = logger.bind(name="flucsim")

GROUPS = (GBR, NON_GBR)
GROUP_NAMES = {GBR: "gbr", NON_GBR: "nongbr"}

FEDERATION_COLUMNS = [
    "round", "tti", "group", "ue_id",
    "reward_norm", "experience_norm", "eligible_norm", "weight",
]


def normalize_indicators(indicators: Sequence[Sequence[float]]) -> np.ndarray:
    """Divide each indicator column by its maximum over the group.

    A column whose maximum is zero contributes zeros.
    """
    arr = np.atleast_2d(np.asarray(indicators, dtype=float))
    peak = arr.max(axis=0)
    out = np.zeros_like(arr)
    nonzero = peak > 0
    out[:, nonzero] = arr[:, nonzero] / peak[nonzero]
    return out


def attention_weights(indicators: Sequence[Sequence[float]], n_k: int = 3) -> np.ndarray:
    """Softmax attention weights of the members of one group.

    Parameters
    ----------
    indicators: sequence of (R, Psi, Phi) tuples
        Raw indicators, one tuple per UE.
    n_k: int
        Divisor of the summed normalized indicators.

    Example
    -------
    >>> attention_weights([(1, 0, 0), (0, 0, 0)])
    array([0.58..., 0.41...])
    """
    if not len(indicators):
        raise ConfigurationError("attention weights need at least one UE")
    scores = normalize_indicators(indicators).sum(axis=1) / n_k
    return softmax(scores)


class GlobalModel:
    """Per-group global parameters theta_g.

    Parameters
    ----------
    eta1: float
        Speed of the global update toward the weighted local sum.
    eta2: float
        Speed of the local blend toward the global model (FL, FLI).
    fed_interval: int
        TTIs between federation boundaries.
    """
    def __init__(self, eta1: float = 0.9, eta2: float = 0.9, fed_interval: int = 30):
        self.eta1 = eta1
        self.eta2 = eta2
        self.fed_interval = fed_interval
        self.models: Dict[int, Optional[MlpModel]] = {i: None for i in GROUPS}

    def get(self, group: int) -> Optional[MlpModel]:
        return self.models[group]

    def initialized(self, group: int) -> bool:
        return self.models[group] is not None

    def combine(self, group: int, locals_: Sequence[Tuple[MlpModel, float]]) -> MlpModel:
        """Return the updated theta_g without installing it.

        The result is (1 - eta1) * theta_g + eta1 * sum(w * theta); an
        uninitialized theta_g is replaced by the weighted sum itself.
        """
        if not locals_:
            raise ConfigurationError("no local models to aggregate")
        template = locals_[0][0]
        for model, _ in locals_:
            if not model.same_shape(template):
                raise ConfigurationError(
                    f"local model {model.layer_sizes} does not match {template.layer_sizes}")
        current = self.models[group]
        if current is not None and not current.same_shape(template):
            raise ConfigurationError(
                f"global {GROUP_NAMES[group]} model {current.layer_sizes} does not "
                f"match locals {template.layer_sizes}")

        weighted = sum(w * model.get_params() for model, w in locals_)
        if current is None:
            new = template.copy().set_params(weighted)
        else:
            params = (1.0 - self.eta1) * current.get_params() + self.eta1 * weighted
            new = current.copy().set_params(params)
        new.reset_poz()
        return new

    def aggregate(self, group: int, locals_: Sequence[Tuple[MlpModel, float]]) -> MlpModel:
        """Update and return theta_g of a group."""
        self.models[group] = self.combine(group, locals_)
        return self.models[group]


@dataclass
class GroupSnapshot:
    """What one group reported at a boundary."""
    group: int
    tti: int
    ue_ids: List[int]
    raw: np.ndarray
    normalized: np.ndarray
    weights: np.ndarray
    models: List[MlpModel]
    result: Optional[MlpModel] = None
    error: Optional[str] = None


@dataclass
class FederationRound:
    round: int
    tti: int
    groups: List[GroupSnapshot] = field(default_factory=list)


class FederationCoordinator:
    """RAN-controller side of the federation.

    Parameters
    ----------
    global_model: GlobalModel
        Holder of the per-group global parameters.
    transfer: bool
        If True push-back installs theta_g as each member's expert
        (KT-FLUC); otherwise local models are blended (FL, FLI).
    t_total: int
        Run length used to normalize the experience indicator.
    n_indicators: int
        Softmax score divisor.
    overlap: bool
        Aggregate on a worker thread while the next TTI runs; results
        land at the start of the TTI after that.
    keep_snapshots: bool
        Keep a copy of every round's global models in `snapshots`.
    """
    def __init__(
        self,
        global_model: GlobalModel,
        transfer: bool,
        t_total: int,
        n_indicators: int = 3,
        overlap: bool = False,
        keep_snapshots: bool = False,
        ):
        self.global_model = global_model
        self.transfer = transfer
        self.t_total = max(int(t_total), 1)
        self.n_indicators = n_indicators
        self.overlap = overlap
        self.keep_snapshots = keep_snapshots

        self.round = 0
        self.log: List[dict] = []
        self.excluded_groups = 0
        self.transfer_seconds = 0.0
        """Wall-clock time spent installing experts."""
        self.snapshots: List[Tuple[int, int, MlpModel]] = []
        """(round, group, model) copies when keep_snapshots is set."""
        self._executor: Optional[ThreadPoolExecutor] = None
        self._pending: Optional[Tuple[FederationRound, Future]] = None

    @classmethod
    def from_config(cls, config, transfer: bool) -> "FederationCoordinator":
        return cls(
            GlobalModel(config.eta1, config.eta2, config.fed_interval),
            transfer=transfer,
            t_total=config.ttis,
            n_indicators=config.n_indicators,
            overlap=config.overlap_aggregation,
            keep_snapshots=config.save_fed_rounds,
        )

    def due(self, tti: int) -> bool:
        """True at federation boundaries (multiples of fed_interval after 0)."""
        return tti > 0 and tti % self.global_model.fed_interval == 0

    # ----------------------------------------------------------------
    # the three stages of a round
    # ----------------------------------------------------------------

    def collect(self, tti: int, agents: Dict[int, UeAgent]) -> FederationRound:
        """Read indicators and snapshot local parameters of every group."""
        self.round += 1
        fround = FederationRound(round=self.round, tti=tti)
        for group in GROUPS:
            members = [agents[i] for i in sorted(agents) if agents[i].traffic_type == group]
            if not members:
                continue
            raw = np.array([i.window_indicators(self.t_total) for i in members])
            fround.groups.append(GroupSnapshot(
                group=group,
                tti=tti,
                ue_ids=[i.ue_id for i in members],
                raw=raw,
                normalized=normalize_indicators(raw),
                weights=attention_weights(raw, self.n_indicators),
                models=[i.local_model.copy() for i in members],
            ))
        return fround

    def combine(self, fround: FederationRound) -> FederationRound:
        """Compute new global models; touches no shared state."""
        for snap in fround.groups:
            try:
                snap.result = self.global_model.combine(
                    snap.group, list(zip(snap.models, snap.weights)))
            except ConfigurationError as err:
                snap.error = str(err)
        return fround

    def land(self, fround: FederationRound, agents: Dict[int, UeAgent]):
        """Install global models, log the round and push back to members."""
        for snap in fround.groups:
            if snap.error is not None:
                self.excluded_groups += 1
                logger.error(
                    f"round {fround.round}: {GROUP_NAMES[snap.group]} group "
                    f"excluded from aggregation: {snap.error}")
                continue
            self.global_model.models[snap.group] = snap.result
            for idx, ue_id in enumerate(snap.ue_ids):
                self.log.append({
                    "round": fround.round,
                    "tti": fround.tti,
                    "group": GROUP_NAMES[snap.group],
                    "ue_id": ue_id,
                    "reward_norm": snap.normalized[idx, 0],
                    "experience_norm": snap.normalized[idx, 1],
                    "eligible_norm": snap.normalized[idx, 2],
                    "weight": snap.weights[idx],
                })
            if self.keep_snapshots:
                self.snapshots.append((fround.round, snap.group, snap.result.copy()))
            members = [agents[i] for i in snap.ue_ids if i in agents]
            self.push_back(snap.group, members)
        logger.debug(f"federation round {fround.round} at TTI {fround.tti} landed")

    # ----------------------------------------------------------------
    # public entry points
    # ----------------------------------------------------------------

    def federate(self, tti: int, agents: Dict[int, UeAgent]):
        """Run a full round synchronously, or start one in the background."""
        fround = self.collect(tti, agents)
        if not self.overlap:
            self.land(self.combine(fround), agents)
            return
        self.flush(agents)
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=1)
        self._pending = (fround, self._executor.submit(self.combine, fround))

    def land_pending(self, tti: int, agents: Dict[int, UeAgent]):
        """Land a background round once a full TTI has passed since its boundary."""
        if self._pending is None:
            return
        fround, _ = self._pending
        if tti >= fround.tti + 2:
            self.flush(agents)

    def flush(self, agents: Dict[int, UeAgent]):
        """Wait for and land any background round."""
        if self._pending is None:
            return
        fround, future = self._pending
        self._pending = None
        self.land(future.result(), agents)

    def close(self, agents: Dict[int, UeAgent]):
        self.flush(agents)
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def aggregate(self, group: int, locals_: Sequence[Tuple[MlpModel, float]]) -> MlpModel:
        return self.global_model.aggregate(group, locals_)

    def push_back(self, group: int, agents: Sequence[UeAgent]):
        """Blend theta_g into local models, or install it as expert."""
        theta = self.global_model.get(group)
        if theta is None:
            return
        start = time.perf_counter()
        for agent in agents:
            if self.transfer:
                agent.set_expert(theta)
            else:
                agent.local_model.blend(theta, self.global_model.eta2)
        if self.transfer:
            self.transfer_seconds += time.perf_counter() - start

    def init_newcomer(self, agent: UeAgent, transfer: bool = True) -> UeAgent:
        """Start a newly arrived agent from its group's global model.

        With transfer both the local and expert models are copies of
        theta_g; without it only the local model is replaced. An
        uninitialized group leaves the agent's random initialization.
        """
        theta = self.global_model.get(agent.traffic_type)
        if theta is None:
            logger.warning(
                f"{GROUP_NAMES[agent.traffic_type]} global model not initialized; "
                f"UE {agent.ue_id} keeps its random initialization")
            if transfer and agent.expert_model is None:
                agent.set_expert(agent.local_model)
            return agent
        if transfer:
            agent.adopt(theta)
        else:
            agent.local_model = theta.copy()
            agent.local_model.reset_poz()
            agent.buffer.clear()
        return agent
