from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Fixed-capacity FIFO ring buffer of transitions stored column-wise."""

    def __init__(self, capacity: int, obs_dim: int, action_dtype=np.int64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=action_dtype)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, terminal) -> None:
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def oldest_index(self) -> int:
        return self._next if self.size == self.capacity else 0

    def sample(self, batch_size: int, rng):
        """Uniform sample with replacement; returns column arrays."""
        idx = rng.integers(self.size, size=batch_size)
        return (
            self.obs[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx],
            self.terminals[idx],
        )
