"""Prey decision functions.

Each scalar function (``boids_action`` etc.) decides for one agent. The
``*Policy`` classes decide for the whole population at once and are what
the simulation loops call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import WorldConfig, WorldState, build_observations
from .errors import ConfigError, DivergenceError
from .geometry import (
    torus_direction,
    torus_directions,
    torus_displacement,
    unit_vector,
    wrap_turn,
)
from .nn import MlpParams, mlp_forward

DISCRETE_ACTIONS = np.array([-90.0, -45.0, 0.0, 45.0, 90.0])

# the actor's linear output is squashed to a turn of at most this many degrees
ACTOR_BOUND = 180.0

_ZERO = 1e-12


@dataclass
class BoidsWeights:
    w_align: float = 1.0
    w_cohere: float = 1.0
    w_separate: float = 1.0
    w_avoid: float = 1.0
    neighbor_radius: float = 10.0
    separation_radius: float = 3.0

    def __post_init__(self):
        for name in ("w_align", "w_cohere", "w_separate", "w_avoid"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.separation_radius > self.neighbor_radius:
            raise ConfigError("separation_radius must not exceed neighbor_radius")


def _unit(v):
    n = np.hypot(v[0], v[1])
    return v / n if n > _ZERO else np.zeros(2)


def boids_action(self_agent, neighbors, predator, w: BoidsWeights, cfg: WorldConfig) -> float:
    """Turn toward the weighted sum of the four steering vectors.

    ``neighbors`` are the agents within ``w.neighbor_radius``; the result is
    an unclamped turn in (-180, 180].
    """
    L = cfg.edge_length
    v = np.zeros(2)
    if neighbors:
        headings = unit_vector([nb.orientation for nb in neighbors])
        v += w.w_align * headings.mean(axis=0)

        disp = torus_displacement(self_agent.pos, np.array([nb.pos for nb in neighbors]), L)
        v += w.w_cohere * _unit(disp.mean(axis=0))

        sep = np.zeros(2)
        for d in disp:
            dist = np.hypot(d[0], d[1])
            if _ZERO < dist <= w.separation_radius:
                sep -= d / dist / dist
        v += w.w_separate * sep

    away = -torus_displacement(self_agent.pos, predator.pos, L)
    v += w.w_avoid * _unit(away)

    if np.hypot(v[0], v[1]) <= _ZERO:
        return 0.0
    return wrap_turn(np.degrees(np.arctan2(v[1], v[0])) - self_agent.orientation)


def boids_actions(state: WorldState, w: BoidsWeights, cfg: WorldConfig) -> np.ndarray:
    """``boids_action`` for every agent at once."""
    L = cfg.edge_length
    pos, ori = state.positions, state.orientations
    N = len(ori)
    disp = torus_displacement(pos[:, None, :], pos[None, :, :], L)
    dist = np.sqrt(np.sum(disp**2, axis=-1))
    nb = dist <= w.neighbor_radius
    np.fill_diagonal(nb, False)
    count = nb.sum(axis=1)
    has = count > 0
    safe = np.maximum(count, 1)[:, None]

    v = np.zeros((N, 2))
    heads = unit_vector(ori)
    v += w.w_align * (nb.astype(float) @ heads) / safe * has[:, None]

    com = np.einsum("ij,ijk->ik", nb.astype(float), disp) / safe
    com_norm = np.hypot(com[:, 0], com[:, 1])
    ok = has & (com_norm > _ZERO)
    v[ok] += w.w_cohere * com[ok] / com_norm[ok, None]

    close = nb & (dist > _ZERO) & (dist <= w.separation_radius)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(close, 1.0 / np.where(close, dist, 1.0) ** 2, 0.0)
    v -= w.w_separate * np.einsum("ij,ijk->ik", scale, disp)

    away = -torus_displacement(pos, state.predator.pos[None, :], L)
    an = np.hypot(away[:, 0], away[:, 1])
    ok = an > _ZERO
    v[ok] += w.w_avoid * away[ok] / an[ok, None]

    vn = np.hypot(v[:, 0], v[:, 1])
    turn = wrap_turn(np.degrees(np.arctan2(v[:, 1], v[:, 0])) - ori)
    return np.where(vn > _ZERO, turn, 0.0)


def turnaway_action(self_agent, predator, cfg: WorldConfig) -> float:
    """Turn to face exactly away from the predator."""
    d = torus_displacement(self_agent.pos, predator.pos, cfg.edge_length)
    if np.hypot(d[0], d[1]) <= _ZERO:
        return 0.0
    bearing = torus_direction(self_agent.pos, self_agent.orientation, predator.pos, cfg.edge_length)
    return wrap_turn(bearing + 180.0)


def turnaway_actions(state: WorldState, cfg: WorldConfig) -> np.ndarray:
    d = torus_displacement(state.positions, state.predator.pos[None, :], cfg.edge_length)
    bearing = torus_directions(d, state.orientations)
    coincident = np.hypot(d[:, 0], d[:, 1]) <= _ZERO
    return np.where(coincident, 0.0, wrap_turn(bearing + 180.0))


def actor_turn(raw):
    """Map raw actor outputs to turns in degrees, ``180 * tanh(raw)``."""
    return ACTOR_BOUND * np.tanh(raw)


def _checked(out):
    if not np.all(np.isfinite(out)):
        raise DivergenceError("policy network produced non-finite output")
    return out


def dqn_action(obs, q_net: MlpParams) -> float:
    """Greedy discrete turn; ties go to the lowest index."""
    if q_net.spec.n_out != len(DISCRETE_ACTIONS):
        raise ConfigError("Q-network must have 5 outputs")
    q, _ = mlp_forward(q_net, np.asarray(obs, dtype=np.float64).ravel())
    return float(DISCRETE_ACTIONS[int(np.argmax(_checked(q)))])


def ddpg_action(obs, actor: MlpParams) -> float:
    if actor.spec.n_out != 1:
        raise ConfigError("actor must have a single output")
    a, _ = mlp_forward(actor, np.asarray(obs, dtype=np.float64).ravel())
    return wrap_turn(float(actor_turn(_checked(a)[0])))


class Policy:
    """Population policy: one turn per agent from the current world state."""

    name = "policy"
    neighbors = None

    def actions(self, state: WorldState, cfg: WorldConfig, rng) -> np.ndarray:
        raise NotImplementedError


class RandomTurnPolicy(Policy):
    name = "random"

    def actions(self, state, cfg, rng):
        return DISCRETE_ACTIONS[rng.integers(len(DISCRETE_ACTIONS), size=state.num_agents)]


class TurnAwayPolicy(Policy):
    name = "turnaway"

    def actions(self, state, cfg, rng):
        return turnaway_actions(state, cfg)


class BoidsPolicy(Policy):
    name = "boids"

    def __init__(self, weights: BoidsWeights = None):
        self.weights = weights or BoidsWeights()

    def actions(self, state, cfg, rng):
        return boids_actions(state, self.weights, cfg)


class DqnPolicy(Policy):
    name = "dqn"

    def __init__(self, q_net: MlpParams, neighbors: int):
        if q_net.spec.n_in != 3 * (neighbors + 2):
            raise ConfigError("Q-network input width does not match neighbour count")
        if q_net.spec.n_out != len(DISCRETE_ACTIONS):
            raise ConfigError("Q-network must have 5 outputs")
        self.net = q_net
        self.neighbors = neighbors

    def actions(self, state, cfg, rng):
        obs = build_observations(state, self.neighbors, cfg).reshape(state.num_agents, -1)
        q, _ = mlp_forward(self.net, obs)
        return DISCRETE_ACTIONS[np.argmax(_checked(q), axis=1)]


class DdpgPolicy(Policy):
    name = "ddpg"

    def __init__(self, actor: MlpParams, neighbors: int):
        if actor.spec.n_in != 3 * (neighbors + 2) or actor.spec.n_out != 1:
            raise ConfigError("actor shape does not match neighbour count")
        self.net = actor
        self.neighbors = neighbors

    def actions(self, state, cfg, rng):
        obs = build_observations(state, self.neighbors, cfg).reshape(state.num_agents, -1)
        a, _ = mlp_forward(self.net, obs)
        return wrap_turn(actor_turn(_checked(a)[:, 0]))


def neighbors_of(state: WorldState, i: int, radius: float, cfg: WorldConfig) -> list:
    """Agents other than ``i`` within ``radius`` (torus metric)."""
    d = np.sqrt(np.sum(torus_displacement(state.positions[i], state.positions, cfg.edge_length) ** 2, axis=-1))
    return [state.agent(j) for j in np.flatnonzero(d <= radius) if j != i]


__all__ = [
    "DISCRETE_ACTIONS",
    "BoidsWeights",
    "boids_action",
    "boids_actions",
    "turnaway_action",
    "turnaway_actions",
    "dqn_action",
    "ddpg_action",
    "actor_turn",
    "Policy",
    "RandomTurnPolicy",
    "TurnAwayPolicy",
    "BoidsPolicy",
    "DqnPolicy",
    "DdpgPolicy",
    "neighbors_of",
]
