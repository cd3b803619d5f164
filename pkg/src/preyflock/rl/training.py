"""Single-learner training with policy copy after every episode.

Agent 0 is the learner. Every other agent acts greedily with the most recent
copy of the learner's network; the copy is refreshed whenever the learner's
episode ends (caught, or ``max_episode_steps`` frames survived). The world
keeps running across episode boundaries and the replay buffer persists.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..env import WorldConfig, build_observations, reset_world, reward_for, step_world
from ..errors import ConfigError, DivergenceError
from ..geometry import wrap_angle, wrap_position, wrap_turn
from ..nn import AdamState, MlpParams, init_params, mlp_forward
from ..policies import DISCRETE_ACTIONS, actor_turn
from .ddpg import DdpgConfig, OuNoiseState, ddpg_train_step, ou_step
from .dqn import DqnConfig, dqn_train_step, epsilon_greedy
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

LEARNER = 0


class TrainingDiverged(DivergenceError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class EpisodeRecord:
    episode: int
    length: int
    ret: float
    exploration: float
    wall_steps: int
    caught: bool


@dataclass
class TrainRun:
    algo: str
    seed: int
    world_cfg: WorldConfig
    algo_cfg: object
    networks: dict
    episodes: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    buffer: Optional[ReplayBuffer] = None

    @property
    def policy(self) -> MlpParams:
        return self.networks["q" if self.algo == "dqn" else "actor"]


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(4)]


class _DqnLearner:
    def __init__(self, cfg: DqnConfig, init_rng):
        self.cfg = cfg
        self.q = init_params(cfg.net_spec(), init_rng)
        self.target = self.q.copy() if cfg.target_update > 0 else None
        self.adam = AdamState.for_params(self.q, lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size, cfg.net_spec().n_in, np.int64)
        self.updates = 0

    @property
    def networks(self):
        return {"q": self.q}

    @property
    def policy(self):
        return self.q

    exploration = property(lambda self: self.cfg.epsilon)

    def start_episode(self):
        pass

    def act(self, obs, warm: bool, rng):
        if not warm:
            idx = int(rng.integers(len(DISCRETE_ACTIONS)))
        else:
            q, _ = mlp_forward(self.q, obs)
            idx = epsilon_greedy(q, self.cfg.epsilon, rng)
        return idx, float(DISCRETE_ACTIONS[idx])

    @staticmethod
    def greedy(params, obs):
        q, _ = mlp_forward(params, obs)
        return DISCRETE_ACTIONS[np.argmax(q, axis=1)]

    def train(self, rng):
        loss = dqn_train_step(
            self.q, self.target, self.adam, self.buffer, self.cfg.batch_size, self.cfg.gamma, rng
        )
        if loss is not None:
            self.updates += 1
            if self.target is not None and self.updates % self.cfg.target_update == 0:
                self.target.assign(self.q)
        return loss


class _DdpgLearner:
    def __init__(self, cfg: DdpgConfig, init_rng):
        self.cfg = cfg
        self.actor = init_params(cfg.actor_spec(), init_rng)
        self.critic = init_params(cfg.critic_spec(), init_rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_adam = AdamState.for_params(self.actor, lr=cfg.lr)
        self.critic_adam = AdamState.for_params(self.critic, lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_size, cfg.obs_dim, np.float64)
        self.noise = OuNoiseState(cfg.ou_mu, cfg.ou_theta, cfg.ou_mu, cfg.ou_sigma)

    @property
    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    @property
    def policy(self):
        return self.actor

    exploration = property(lambda self: self.cfg.ou_sigma)

    def start_episode(self):
        self.noise.reset()

    def act(self, obs, warm: bool, rng):
        if not warm:
            a = wrap_turn(rng.uniform(-180.0, 180.0))
        else:
            raw, _ = mlp_forward(self.actor, obs)
            x, _ = ou_step(self.noise, rng)
            a = wrap_turn(actor_turn(raw[0]) + self.cfg.noise_scale_deg * x)
        return a, a

    @staticmethod
    def greedy(params, obs):
        a, _ = mlp_forward(params, obs)
        return wrap_turn(actor_turn(a[:, 0]))

    def train(self, rng):
        return ddpg_train_step(
            self.actor, self.critic, self.target_actor, self.target_critic,
            self.actor_adam, self.critic_adam, self.buffer, self.cfg, rng,
        )


def make_learner(algo: str, cfg, init_rng):
    if algo == "dqn":
        return _DqnLearner(cfg, init_rng)
    if algo == "ddpg":
        return _DdpgLearner(cfg, init_rng)
    raise ConfigError(f"unknown algorithm {algo!r}")


def run_training(
    algo: str,
    world_cfg: WorldConfig,
    algo_cfg,
    seed: int,
    on_episode_end: Optional[Callable] = None,
    checkpoint: Optional[Callable] = None,
) -> TrainRun:
    """Train one learner for ``algo_cfg.training_steps`` environment steps.

    ``on_episode_end(run, learner_params, shared_params)`` is called after each
    policy copy. ``checkpoint(run, tag)`` is called every
    ``algo_cfg.checkpoint_every`` episodes and once before raising
    ``TrainingDiverged``; its return value is recorded in ``run.checkpoints``.
    """
    n = algo_cfg.observable_neighbors
    N = world_cfg.num_agents
    if N < n + 1:
        raise ConfigError(f"{N} agents cannot provide {n} observable neighbours")

    world_rng, explore_rng, replay_rng, init_rng = _streams(seed)
    learner = make_learner(algo, algo_cfg, init_rng)
    shared = learner.policy.copy()
    run = TrainRun(algo, seed, world_cfg, algo_cfg, learner.networks, buffer=learner.buffer)

    state = reset_world(world_cfg, world_rng)
    obs_all = build_observations(state, n, world_cfg).reshape(N, -1)
    actions = np.zeros(N)
    ep_len, ep_ret = 0, 0.0
    learner.start_episode()

    def diverged(msg):
        if checkpoint is not None:
            run.checkpoints.append(checkpoint(run, "diverged"))
        raise TrainingDiverged(msg, run.checkpoints[-1] if run.checkpoints else None)

    for step in range(algo_cfg.training_steps):
        warm = step >= algo_cfg.warmup_steps
        obs = obs_all[LEARNER].copy()
        stored, actions[LEARNER] = learner.act(obs, warm, explore_rng)
        if N > 1:
            actions[1:] = learner.greedy(shared, obs_all[1:])
            if not np.all(np.isfinite(actions)):
                diverged(f"non-finite actions at step {step}")

        state, events = step_world(state, actions, world_cfg)
        r = reward_for(LEARNER, events)
        terminal = LEARNER in events.caught
        ep_len += 1
        ep_ret += r
        obs_all = build_observations(state, n, world_cfg).reshape(N, -1)
        learner.buffer.add(obs, stored, r, obs_all[LEARNER], terminal)

        if warm:
            loss = learner.train(replay_rng)
            if loss is not None:
                if not np.isfinite(loss) or not learner.policy.is_finite():
                    diverged(f"training diverged at step {step} (loss={loss})")
                run.losses.append(loss)

        if terminal or ep_len >= world_cfg.max_episode_steps:
            run.episodes.append(
                EpisodeRecord(len(run.episodes), ep_len, ep_ret, learner.exploration, step + 1, terminal)
            )
            shared.assign(learner.policy)
            if on_episode_end is not None:
                on_episode_end(run, learner.policy, shared)
            every = getattr(algo_cfg, "checkpoint_every", 0)
            if checkpoint is not None and every and len(run.episodes) % every == 0:
                run.checkpoints.append(checkpoint(run, f"ep{len(run.episodes):06d}"))
            if not terminal:
                state.positions[LEARNER] = wrap_position(
                    world_rng.uniform(0.0, world_cfg.edge_length, size=2), world_cfg.edge_length
                )
                state.orientations[LEARNER] = wrap_angle(world_rng.uniform(0.0, 360.0))
                state.alive_steps[LEARNER] = 0
                obs_all = build_observations(state, n, world_cfg).reshape(N, -1)
            ep_len, ep_ret = 0, 0.0
            learner.start_episode()

    return run
