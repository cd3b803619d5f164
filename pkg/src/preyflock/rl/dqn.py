from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..nn import AdamState, MlpParams, MlpSpec, adam_update, mlp_backward, mlp_forward
from ..policies import DISCRETE_ACTIONS
from .replay import ReplayBuffer

log = logging.getLogger(__name__)


@dataclass
class DqnConfig:
    training_steps: int = 500_000
    gamma: float = 0.999999
    lr: float = 0.001
    buffer_size: int = 50_000
    batch_size: int = 64
    epsilon: float = 0.1
    observable_neighbors: int = 5
    hidden_layers: int = 10
    hidden_units: int = 16
    warmup_steps: int = 1000
    # hard target copy every N gradient steps; 0 disables the target network
    target_update: int = 500
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.batch_size > self.buffer_size:
            raise ConfigError("batch_size must not exceed buffer_size")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.target_update < 0:
            raise ConfigError("target_update must be >= 0")

    def net_spec(self) -> MlpSpec:
        n_in = 3 * (self.observable_neighbors + 2)
        return MlpSpec.build(n_in, self.hidden_layers, self.hidden_units, len(DISCRETE_ACTIONS))


def q_target(r: float, terminal: bool, next_q, gamma: float) -> float:
    next_q = np.asarray(next_q, dtype=np.float64)
    if next_q.size == 0:
        raise ValueError("next_q must be non-empty")
    return float(r) if terminal else float(r + gamma * np.max(next_q))


def q_targets(rewards, terminals, next_q, gamma: float) -> np.ndarray:
    """Vectorised ``q_target`` over a batch."""
    return np.where(terminals, rewards, rewards + gamma * next_q.max(axis=1))


def epsilon_greedy(q_values, epsilon: float, rng) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    q_values = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return int(np.argmax(q_values))


def dqn_loss_and_grads(q_net: MlpParams, target_net, batch, gamma: float):
    """MSE on taken actions only. Returns ``(loss, grads)``."""
    obs, actions, rewards, next_obs, terminals = batch
    source = q_net if target_net is None else target_net
    next_q, _ = mlp_forward(source, next_obs)
    y = q_targets(rewards, terminals, next_q, gamma)
    q, cache = mlp_forward(q_net, obs)
    rows = np.arange(len(actions))
    err = q[rows, actions] - y
    loss = float(np.mean(err * err))
    g = np.zeros_like(q)
    g[rows, actions] = 2.0 * err / len(actions)
    grads, _ = mlp_backward(q_net, cache, g)
    return loss, grads


def dqn_train_step(q_net: MlpParams, target_net, adam: AdamState, buffer: ReplayBuffer,
                   batch_size: int, gamma: float, rng):
    """One Adam step on a uniformly sampled batch; returns the batch loss.

    Returns ``None`` without touching anything if the buffer is too small.
    ``target_net=None`` bootstraps from ``q_net`` itself.
    """
    if len(buffer) < batch_size:
        log.debug("replay buffer has %d < %d transitions, skipping", len(buffer), batch_size)
        return None
    batch = buffer.sample(batch_size, rng)
    loss, grads = dqn_loss_and_grads(q_net, target_net, batch, gamma)
    adam_update(q_net, grads, adam)
    return loss
