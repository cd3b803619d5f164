"""Policy evaluation episodes.

An evaluation episode starts from a fresh world and ends when the tracked
agent (id 0) is caught or ``max_episode_steps`` frames have run. Every agent
follows the same policy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .env import WorldConfig, reset_world, step_world
from .errors import ConfigError
from .policies import Policy

TRACKED = 0


@dataclass
class Trajectory:
    """Per-frame record; index 0 is the initial state.

    ``caught[t, i]`` marks that agent ``i`` was caught during frame ``t``;
    in that case ``prey_pos[t, i]`` is already its respawn position.
    """

    prey_pos: np.ndarray
    prey_ori: np.ndarray
    caught: np.ndarray
    pred_pos: np.ndarray
    pred_ori: np.ndarray

    @property
    def num_frames(self) -> int:
        return len(self.pred_ori)

    @property
    def num_agents(self) -> int:
        return self.prey_pos.shape[1]

    @property
    def episode_length(self) -> int:
        return self.num_frames - 1

    @property
    def total_catches(self) -> int:
        return int(self.caught.sum())


@dataclass
class EpisodeResult:
    seed: int
    episode: int
    length: int
    tracked_caught: bool
    catches: int
    trajectory: Optional[Trajectory] = None


def episode_rngs(seed: int, episode: int):
    world, policy = np.random.SeedSequence([seed, episode]).spawn(2)
    return np.random.Generator(np.random.PCG64(world)), np.random.Generator(np.random.PCG64(policy))


def run_episode(policy: Policy, cfg: WorldConfig, seed: int, episode: int = 0,
                record: bool = False, max_steps: Optional[int] = None) -> EpisodeResult:
    n = getattr(policy, "neighbors", None)
    if n is not None and cfg.num_agents < n + 1:
        raise ConfigError(
            f"policy observes {n} neighbours but only {cfg.num_agents} agents exist"
        )
    max_steps = cfg.max_episode_steps if max_steps is None else max_steps
    world_rng, policy_rng = episode_rngs(seed, episode)
    state = reset_world(cfg, world_rng)
    N = state.num_agents

    if record:
        cap = max_steps + 1
        prey_pos = np.empty((cap, N, 2))
        prey_ori = np.empty((cap, N))
        caught = np.zeros((cap, N), dtype=bool)
        pred_pos = np.empty((cap, 2))
        pred_ori = np.empty(cap)
        prey_pos[0], prey_ori[0] = state.positions, state.orientations
        pred_pos[0], pred_ori[0] = state.predator.pos, state.predator.orientation

    catches = 0
    tracked_caught = False
    t = 0
    while t < max_steps:
        actions = policy.actions(state, cfg, policy_rng)
        state, events = step_world(state, actions, cfg)
        t += 1
        catches += len(events.caught)
        if record:
            prey_pos[t], prey_ori[t] = state.positions, state.orientations
            pred_pos[t], pred_ori[t] = state.predator.pos, state.predator.orientation
            caught[t, events.caught] = True
        if TRACKED in events.caught:
            tracked_caught = True
            break

    traj = None
    if record:
        k = t + 1
        traj = Trajectory(prey_pos[:k], prey_ori[:k], caught[:k], pred_pos[:k], pred_ori[:k])
    return EpisodeResult(seed, episode, t, tracked_caught, catches, traj)


def evaluate(policy: Policy, cfg: WorldConfig, seeds, episodes: int, record: bool = False):
    return [
        run_episode(policy, cfg, seed, ep, record=record)
        for seed in seeds
        for ep in range(episodes)
    ]
