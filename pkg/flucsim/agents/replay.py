#!/usr/bin/env python

"""Bounded experience replay."""

from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Tuple
import numpy as np

from flucsim.utils.utils import ConfigurationError


@dataclass(frozen=True)
class Experience:
    """One transition {S^{t-1}, S^t, a^t, R^t}."""
    prev_state: np.ndarray
    next_state: np.ndarray
    action: int
    reward: float


class ReplayBuffer:
    """FIFO of the most recent `capacity` experiences.

    Parameters
    ----------
    capacity: int
        Maximum number of stored experiences; the oldest is dropped
        when a new one arrives on a full buffer.
    """
    def __init__(self, capacity: int = 200):
        if capacity < 1:
            raise ConfigurationError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self._data = deque(maxlen=self.capacity)
        self._state_dim: Optional[int] = None

    def __len__(self):
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def clear(self):
        self._data.clear()
        self._state_dim = None

    def add(self, experience: Experience):
        dims = (np.size(experience.prev_state), np.size(experience.next_state))
        if dims[0] != dims[1] or (self._state_dim is not None and dims[0] != self._state_dim):
            raise ConfigurationError(f"experience state lengths {dims} do not match the buffer")
        self._state_dim = dims[0]
        self._data.append(experience)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Experience]:
        """Uniform minibatch without replacement."""
        if batch_size > len(self._data):
            raise ConfigurationError(
                f"cannot sample {batch_size} from a buffer holding {len(self._data)}")
        idxs = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idxs]


def stack_batch(batch: List[Experience]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (states, next_states, actions, rewards) arrays."""
    states = np.stack([i.prev_state for i in batch])
    next_states = np.stack([i.next_state for i in batch])
    actions = np.array([i.action for i in batch], dtype=np.int64)
    rewards = np.array([i.reward for i in batch], dtype=float)
    return states, next_states, actions, rewards
