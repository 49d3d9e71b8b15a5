#!/usr/bin/env python

"""Cell-centric DQN used by the centralized (CL) baseline.

One network observes the concatenated states of a fixed number of UE
slots and outputs one block of per-BS Q-values per slot. The joint
action is decoded slot by slot (argmax within each block), which keeps
the output layer linear in the number of slots instead of exponential.
"""

from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence
import numpy as np
from loguru import logger

from flucsim.nn.mlp import MlpModel
from flucsim.utils.utils import ConfigurationError

logger = logger.bind(name="flucsim")


def encode_joint_action(actions: Sequence[int], n_actions: int) -> int:
    """Mixed-radix index of a per-slot action tuple (slot 0 least significant)."""
    index = 0
    for action in reversed(list(actions)):
        if not 0 <= action < n_actions:
            raise ConfigurationError(f"action {action} outside 0..{n_actions - 1}")
        index = index * n_actions + int(action)
    return index


def decode_joint_action(index: int, n_actions: int, n_slots: int) -> List[int]:
    """Inverse of encode_joint_action."""
    if not 0 <= index < n_actions ** n_slots:
        raise ConfigurationError(f"joint action {index} outside the action space")
    actions = []
    for _ in range(n_slots):
        index, action = divmod(index, n_actions)
        actions.append(action)
    return actions


@dataclass(frozen=True)
class CellExperience:
    state: np.ndarray
    next_state: np.ndarray
    actions: np.ndarray
    valid: np.ndarray
    reward: float


class CentralAgent:
    """Single DQN steering every UE of the network.

    Parameters
    ----------
    n_slots: int
        Maximum number of UEs the controller can steer at once.
    ue_state_dim: int
        Length of one UE's state vector.
    n_actions: int
        Number of base stations.
    model: MlpModel
        Network with input n_slots * (ue_state_dim + 1) and output
        n_slots * n_actions.
    rng: np.random.Generator
        Exploration and sampling stream.
    reward_mode: str
        "mean" (default) or "sum" of the per-UE rewards.
    """
    def __init__(
        self,
        n_slots: int,
        ue_state_dim: int,
        n_actions: int,
        model: MlpModel,
        rng: np.random.Generator,
        epsilon: float = 0.05,
        gamma: float = 0.5,
        learning_rate: float = 0.001,
        batch_size: int = 64,
        buffer_size: int = 200,
        reward_mode: str = "mean",
        loss_reduction: str = "sum",
        ):
        self.n_slots = int(n_slots)
        self.ue_state_dim = int(ue_state_dim)
        self.n_actions = int(n_actions)
        self.slot_dim = self.ue_state_dim + 1
        if model.input_dim != self.n_slots * self.slot_dim:
            raise ConfigurationError(
                f"model input {model.input_dim} != {self.n_slots} slots x {self.slot_dim}")
        if model.output_dim != self.n_slots * self.n_actions:
            raise ConfigurationError(
                f"model output {model.output_dim} != {self.n_slots} slots x {self.n_actions}")
        self.model = model
        self.rng = rng
        self.epsilon = epsilon
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.buffer = deque(maxlen=buffer_size)
        self.reward_mode = reward_mode
        self.loss_reduction = loss_reduction
        self.slots: List[Optional[int]] = [None] * self.n_slots
        self.overflow = 0

    @classmethod
    def from_config(cls, config, rng, model: Optional[MlpModel] = None) -> "CentralAgent":
        n_slots = config.n_cl_slots
        sizes = [n_slots * (config.state_dim + 1), *config.cl_hidden_sizes, n_slots * config.n_bs]
        if model is None:
            model = MlpModel(sizes, rng=config.rng("init", 0))
        return cls(
            n_slots, config.state_dim, config.n_bs, model, rng,
            epsilon=config.epsilon, gamma=config.gamma, learning_rate=config.learning_rate,
            batch_size=config.batch_size, buffer_size=config.buffer_size,
            reward_mode=config.cl_reward, loss_reduction=config.loss_reduction,
        )

    # ----------------------------------------------------------------
    # slot bookkeeping
    # ----------------------------------------------------------------

    def assign(self, ue_id: int) -> Optional[int]:
        """Give a UE the lowest free slot; None if all slots are taken."""
        if ue_id in self.slots:
            return self.slots.index(ue_id)
        for idx, occupant in enumerate(self.slots):
            if occupant is None:
                self.slots[idx] = ue_id
                return idx
        self.overflow += 1
        logger.warning(f"no free CL slot for UE {ue_id}; it keeps its current BS until one frees")
        return None

    def release(self, ue_id: int):
        if ue_id in self.slots:
            self.slots[self.slots.index(ue_id)] = None

    def fill(self, ue_ids: Sequence[int]) -> List[int]:
        """Slot waiting UEs, lowest id first, while free slots remain.

        Returns the ids that received a slot.
        """
        slotted = set(i for i in self.slots if i is not None)
        filled = []
        for ue_id in sorted(ue_ids):
            if None not in self.slots:
                break
            if ue_id not in slotted:
                self.slots[self.slots.index(None)] = ue_id
                filled.append(ue_id)
        if filled:
            logger.debug(f"UEs {filled} took freed CL slots")
        return filled

    def valid_mask(self) -> np.ndarray:
        return np.array([i is not None for i in self.slots])

    def cell_state(self, observations: Dict[int, np.ndarray]) -> np.ndarray:
        """Concatenate per-slot [UE state, validity flag]; empty slots are zeros."""
        state = np.zeros((self.n_slots, self.slot_dim))
        for idx, ue_id in enumerate(self.slots):
            if ue_id is not None and ue_id in observations:
                state[idx, :-1] = observations[ue_id]
                state[idx, -1] = 1.0
        return state.ravel()

    # ----------------------------------------------------------------
    # acting and learning
    # ----------------------------------------------------------------

    def select_actions(self, cell_state: np.ndarray) -> np.ndarray:
        """Per-slot epsilon-greedy actions decoded from the shared network."""
        qvalues = self.model.forward(cell_state).reshape(self.n_slots, self.n_actions)
        actions = np.argmax(qvalues, axis=1)
        for idx in range(self.n_slots):
            if self.rng.random() < self.epsilon:
                actions[idx] = self.rng.integers(self.n_actions)
        return actions

    def decide(self, observations: Dict[int, np.ndarray]):
        """Return (cell_state, slot actions, {ue_id: bs}) for slotted UEs.

        Free slots are first given to active UEs still waiting for one.
        """
        self.fill(observations)
        state = self.cell_state(observations)
        slot_actions = self.select_actions(state)
        decisions = {
            ue_id: int(slot_actions[idx])
            for idx, ue_id in enumerate(self.slots)
            if ue_id is not None and ue_id in observations
        }
        return state, slot_actions, decisions

    def cell_reward(self, rewards: Sequence[float]) -> float:
        if not len(rewards):
            return 0.0
        total = float(np.sum(rewards))
        return total / len(rewards) if self.reward_mode == "mean" else total

    def remember(self, state, next_state, actions, valid, reward: float):
        self.buffer.append(CellExperience(
            np.asarray(state, float), np.asarray(next_state, float),
            np.asarray(actions, np.int64), np.asarray(valid, bool), float(reward)))

    def train(self) -> Optional[float]:
        """One SGD step over valid slots; no-op on a short buffer."""
        if len(self.buffer) < self.batch_size:
            return None
        idxs = self.rng.choice(len(self.buffer), size=self.batch_size, replace=False)
        batch = [self.buffer[i] for i in idxs]
        states = np.stack([i.state for i in batch])
        next_states = np.stack([i.next_state for i in batch])
        actions = np.stack([i.actions for i in batch])
        valid = np.stack([i.valid for i in batch]).astype(float)
        rewards = np.array([i.reward for i in batch])

        nbatch = len(batch)
        q_now = self.model.forward(states).reshape(nbatch, self.n_slots, self.n_actions)
        q_next = self.model.forward(next_states).reshape(nbatch, self.n_slots, self.n_actions)
        target = rewards[:, None] + self.gamma * q_next.max(axis=2)
        chosen = np.take_along_axis(q_now, actions[:, :, None], axis=2)[:, :, 0]
        error = (chosen - target) * valid
        norm = 1.0 / nbatch if self.loss_reduction == "mean" else 1.0
        loss = float(norm * np.sum(error ** 2))

        grad = np.zeros_like(q_now)
        np.put_along_axis(grad, actions[:, :, None], (2.0 * norm * error)[:, :, None], axis=2)
        tape = self.model.backward(states, grad.reshape(nbatch, -1))
        self.model.sgd_step(tape, self.learning_rate)
        return loss
