#!/usr/bin/env python

"""On-device DQN agent of one UE.

Each agent keeps a local Q-network, an optional frozen expert network
received from the federation coordinator, a replay buffer and the
window counters the coordinator turns into attention weights. The
vanilla update regresses Q(s, a) on r + gamma * max Q(s', .); the
transfer update regresses the sum of local and expert Q-values on
twice the reward plus the discounted best summed value, while only the
local network is trained.
"""

from typing import List, Optional, Tuple
import numpy as np
from loguru import logger

from flucsim.agents.replay import Experience, ReplayBuffer, stack_batch
from flucsim.nn.mlp import MlpModel, GradientTape
from flucsim.utils.utils import ConfigurationError, argmax_lowest

logger = logger.bind(name="flucsim")


def td_loss(
    model: MlpModel,
    batch: List[Experience],
    gamma: float,
    expert: Optional[MlpModel] = None,
    reduction: str = "sum",
    full_gradient: bool = False,
    ) -> Tuple[float, GradientTape]:
    """Squared TD error of a minibatch and its gradient w.r.t. model.

    Parameters
    ----------
    model: MlpModel
        The network being trained.
    batch: List[Experience]
        Transitions to fit.
    gamma: float
        Discount factor.
    expert: MlpModel or None
        If given, Q-values are local + expert, rewards are doubled and
        the expert contributes only constants.
    reduction: str
        "sum" adds squared errors over the batch, "mean" averages them.
    full_gradient: bool
        If True the bootstrapped max term also carries gradient through
        the model; by default the target is held fixed.

    Returns
    -------
    (loss, tape)
    """
    states, next_states, actions, rewards = stack_batch(batch)
    rows = np.arange(len(actions))
    q_now = model.forward(states)
    q_next = model.forward(next_states)
    if expert is not None:
        q_now_sum = q_now + expert.forward(states)
        q_next_sum = q_next + expert.forward(next_states)
        rewards = 2.0 * rewards
    else:
        q_now_sum, q_next_sum = q_now, q_next

    best = np.argmax(q_next_sum, axis=1)
    target = rewards + gamma * q_next_sum[rows, best]
    error = q_now_sum[rows, actions] - target
    norm = 1.0 / len(actions) if reduction == "mean" else 1.0
    loss = float(norm * np.sum(error ** 2))

    grad = np.zeros_like(q_now)
    grad[rows, actions] = 2.0 * norm * error
    tape = model.backward(states, grad)
    if full_gradient and gamma:
        grad_next = np.zeros_like(q_next)
        grad_next[rows, best] = -2.0 * gamma * norm * error
        tape = tape + model.backward(next_states, grad_next)
    return loss, tape


class UeAgent:
    """DQN traffic-steering agent held by one UE.

    Parameters
    ----------
    ue_id: int
        Id of the UE this agent belongs to.
    traffic_type: int
        1 for GBR, 0 for non-GBR; selects the federation group.
    local_model: MlpModel
        Local Q-network (input = state length, output = number of BSs).
    rng: np.random.Generator
        Stream for exploration and minibatch sampling.
    epsilon, gamma, learning_rate, batch_size, buffer_size:
        DQN hyperparameters.
    loss_reduction: str
        "sum" or "mean" over the minibatch.
    full_gradient: bool
        Let gradient flow through the bootstrapped target.
    """
    def __init__(
        self,
        ue_id: int,
        traffic_type: int,
        local_model: MlpModel,
        rng: np.random.Generator,
        epsilon: float = 0.05,
        gamma: float = 0.5,
        learning_rate: float = 0.001,
        batch_size: int = 64,
        buffer_size: int = 200,
        loss_reduction: str = "sum",
        full_gradient: bool = False,
        ):
        self.ue_id = int(ue_id)
        self.traffic_type = int(traffic_type)
        self.local_model = local_model
        self.expert_model: Optional[MlpModel] = None
        self.rng = rng
        self.epsilon = epsilon
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.buffer = ReplayBuffer(buffer_size)
        self.loss_reduction = loss_reduction
        self.full_gradient = full_gradient
        self.record_poz = False
        """When True, action selection records PoZ on the local model."""

        # federation window counters
        self.window_ttis = 0
        self.window_reward = 0.0
        self.window_eligible = 0
        self.last_loss: Optional[float] = None

    @classmethod
    def from_config(cls, ue_id, traffic_type, local_model, rng, config) -> "UeAgent":
        return cls(
            ue_id, traffic_type, local_model, rng,
            epsilon=config.epsilon,
            gamma=config.gamma,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            buffer_size=config.buffer_size,
            loss_reduction=config.loss_reduction,
            full_gradient=config.full_gradient,
        )

    @property
    def n_actions(self) -> int:
        return self.local_model.output_dim

    @property
    def has_expert(self) -> bool:
        return self.expert_model is not None

    def set_expert(self, model: MlpModel):
        """Replace the expert with a private copy of model."""
        self.expert_model = model.copy()

    def adopt(self, model: MlpModel):
        """Start from model: local and expert copies, empty buffer."""
        self.local_model = model.copy()
        self.local_model.reset_poz()
        self.expert_model = model.copy()
        self.buffer.clear()

    # ----------------------------------------------------------------
    # acting
    # ----------------------------------------------------------------

    def _epsilon_greedy(self, qvalues: np.ndarray) -> int:
        # the uniform draw is consumed on every decision
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        return argmax_lowest(qvalues)

    def q_local(self, state: np.ndarray) -> np.ndarray:
        return self.local_model.forward(state, record_poz=self.record_poz)

    def select_action_local(self, state: np.ndarray) -> int:
        """epsilon-greedy on the local Q-values."""
        return self._epsilon_greedy(self.q_local(state))

    def select_action_transfer(self, state: np.ndarray) -> int:
        """epsilon-greedy on local plus expert Q-values."""
        if self.expert_model is None:
            raise ConfigurationError(f"agent {self.ue_id} has no expert model")
        return self._epsilon_greedy(self.q_local(state) + self.expert_model.forward(state))

    # ----------------------------------------------------------------
    # learning
    # ----------------------------------------------------------------

    def remember(self, prev_state, next_state, action: int, reward: float, eligible: bool):
        """Store a transition and update the federation window counters."""
        self.buffer.add(Experience(
            np.asarray(prev_state, dtype=float), np.asarray(next_state, dtype=float),
            int(action), float(reward)))
        self.window_ttis += 1
        self.window_reward += reward
        self.window_eligible += int(eligible)

    def _minibatch(self, minibatch):
        if minibatch is not None:
            return minibatch
        if len(self.buffer) < self.batch_size:
            return None
        return self.buffer.sample(self.batch_size, self.rng)

    def train_local(self, minibatch: Optional[List[Experience]] = None) -> Optional[float]:
        """One SGD step on the vanilla DQN loss; no-op on a short buffer."""
        batch = self._minibatch(minibatch)
        if batch is None:
            return None
        loss, tape = td_loss(
            self.local_model, batch, self.gamma,
            reduction=self.loss_reduction, full_gradient=self.full_gradient)
        self.local_model.sgd_step(tape, self.learning_rate)
        self.last_loss = loss
        return loss

    def train_transfer(self, minibatch: Optional[List[Experience]] = None) -> Optional[float]:
        """One SGD step on the transfer loss; the expert stays frozen."""
        if self.expert_model is None:
            raise ConfigurationError(f"agent {self.ue_id} has no expert model")
        batch = self._minibatch(minibatch)
        if batch is None:
            return None
        loss, tape = td_loss(
            self.local_model, batch, self.gamma, expert=self.expert_model,
            reduction=self.loss_reduction, full_gradient=self.full_gradient)
        self.local_model.sgd_step(tape, self.learning_rate)
        self.last_loss = loss
        return loss

    def window_indicators(self, t_total: int) -> Tuple[float, float, float]:
        """Return (mean reward, buffer size / t_total, eligible fraction).

        The window counters are reset afterwards.
        """
        if self.window_ttis:
            mean_reward = self.window_reward / self.window_ttis
            eligible = self.window_eligible / self.window_ttis
        else:
            mean_reward = eligible = 0.0
        experience = len(self.buffer) / t_total if t_total > 0 else 0.0
        self.window_ttis = 0
        self.window_reward = 0.0
        self.window_eligible = 0
        return (float(mean_reward), float(experience), float(eligible))
