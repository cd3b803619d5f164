from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..geometry import wrap_turn
from ..nn import AdamState, MlpParams, MlpSpec, adam_update, mlp_backward, mlp_forward
from ..policies import ACTOR_BOUND, actor_turn
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

# the critic sees the action as degrees / 180
ACTION_SCALE = 180.0


@dataclass
class DdpgConfig:
    training_steps: int = 500_000
    gamma: float = 0.999999
    lr: float = 0.001
    buffer_size: int = 100_000
    batch_size: int = 512
    ou_theta: float = 0.15
    ou_mu: float = 0.0
    ou_sigma: float = 0.3
    observable_neighbors: int = 1
    actor_layers: int = 5
    actor_units: int = 16
    critic_layers: int = 5
    critic_units: int = 32
    tau: float = 0.001
    warmup_steps: int = 1000
    noise_scale_deg: float = 90.0
    checkpoint_every: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.batch_size > self.buffer_size:
            raise ConfigError("batch_size must not exceed buffer_size")
        if self.ou_theta <= 0:
            raise ConfigError("ou_theta must be positive")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")

    @property
    def obs_dim(self) -> int:
        return 3 * (self.observable_neighbors + 2)

    def actor_spec(self) -> MlpSpec:
        return MlpSpec.build(self.obs_dim, self.actor_layers, self.actor_units, 1)

    def critic_spec(self) -> MlpSpec:
        return MlpSpec.build(self.obs_dim + 1, self.critic_layers, self.critic_units, 1)


@dataclass
class OuNoiseState:
    x: float = 0.0
    theta: float = 0.15
    mu: float = 0.0
    sigma: float = 0.3

    def reset(self) -> None:
        self.x = self.mu


def ou_step(state: OuNoiseState, rng):
    """Euler step of the Ornstein-Uhlenbeck process (unit time step)."""
    state.x = state.x + state.theta * (state.mu - state.x) + state.sigma * rng.standard_normal()
    return state.x, state


def critic_input(obs, actions_deg) -> np.ndarray:
    actions_deg = np.asarray(actions_deg, dtype=np.float64).reshape(len(obs), 1)
    return np.hstack([obs, actions_deg / ACTION_SCALE])


def critic_action_gradient(critic: MlpParams, obs, actions_deg) -> np.ndarray:
    """dQ/da (per degree) for each row of the batch."""
    q, cache = mlp_forward(critic, critic_input(obs, actions_deg))
    _, g_in = mlp_backward(critic, cache, np.ones_like(q))
    return g_in[:, -1] / ACTION_SCALE


def actor_step(actor: MlpParams, adam: AdamState, obs, dq_da) -> np.ndarray:
    """Ascend ``mean Q`` given per-sample action gradients.

    ``dq_da`` (per degree of turn) is either an array matching the batch or a
    callable mapping the actor's turns to it. Returns the turns used.
    """
    raw, cache = mlp_forward(actor, obs)
    t = np.tanh(raw[:, 0])
    a = ACTOR_BOUND * t
    g = dq_da(a) if callable(dq_da) else np.asarray(dq_da, dtype=np.float64)
    g_raw = g.reshape(-1) * ACTOR_BOUND * (1.0 - t * t)
    grads, _ = mlp_backward(actor, cache, -g_raw.reshape(-1, 1) / len(obs))
    adam_update(actor, grads, adam)
    return a


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> None:
    if tau == 1.0:
        target.flat[:] = source.flat
    else:
        target.flat *= 1.0 - tau
        target.flat += tau * source.flat


def ddpg_train_step(actor: MlpParams, critic: MlpParams, target_actor: MlpParams,
                    target_critic: MlpParams, actor_adam: AdamState, critic_adam: AdamState,
                    buffer: ReplayBuffer, cfg: DdpgConfig, rng):
    """Critic regression, actor ascent and soft target updates.

    Returns the critic loss, or ``None`` if the buffer is too small.
    """
    if len(buffer) < cfg.batch_size:
        log.debug("replay buffer has %d < %d transitions, skipping", len(buffer), cfg.batch_size)
        return None
    obs, actions, rewards, next_obs, terminals = buffer.sample(cfg.batch_size, rng)

    next_raw, _ = mlp_forward(target_actor, next_obs)
    next_q, _ = mlp_forward(target_critic, critic_input(next_obs, wrap_turn(actor_turn(next_raw[:, 0]))))
    y = np.where(terminals, rewards, rewards + cfg.gamma * next_q[:, 0])

    q, cache = mlp_forward(critic, critic_input(obs, actions))
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    grads, _ = mlp_backward(critic, cache, (2.0 * err / len(err)).reshape(-1, 1))
    adam_update(critic, grads, critic_adam)

    actor_step(
        actor, actor_adam, obs,
        lambda a: critic_action_gradient(critic, obs, wrap_turn(a)),
    )

    soft_update(target_critic, critic, cfg.tau)
    soft_update(target_actor, actor, cfg.tau)
    return loss
