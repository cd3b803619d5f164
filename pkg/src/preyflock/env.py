"""Predator/prey world on a square torus.

A frame advances in a fixed order: every prey turns and moves using the
state from the previous frame, then the predator moves, then catches are
evaluated and caught prey respawn at uniform random positions. All state
changes draw randomness from the world's own ``numpy`` generator, so a run is
bit-reproducible from its seed.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import (
    max_torus_distance,
    torus_direction,
    torus_directions,
    torus_displacement,
    torus_distance,
    unit_vector,
    wrap_angle,
    wrap_position,
    wrap_turn,
)

CATCH_REWARD = -1000.0
ALIVE_REWARD = 1.0


@dataclass
class WorldConfig:
    edge_length: float = 40.0
    agent_radius: float = 1.0
    catch_distance: float = 2.0
    num_agents: int = 10
    agent_speed: float = 0.5
    predator_speed: float = 0.5
    predator_max_turn: float = 45.0
    distraction_radius: float = 8.0
    lock_duration: int = 30
    leap_speed_factor: float = 2.0
    leap_duration: int = 10
    leap_cooldown: int = 50
    max_episode_steps: int = 10_000
    rng_seed: int = 0
    # 180 leaves prey turns unclamped
    prey_max_turn: float = 180.0
    pin_predator: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.edge_length <= 0:
            raise ConfigError("edge_length must be positive")
        if not np.isclose(self.catch_distance, 2.0 * self.agent_radius):
            raise ConfigError("catch_distance must equal 2 * agent_radius")
        if self.agent_speed <= 0:
            raise ConfigError("agent_speed must be positive")
        if not 0.0 < self.predator_max_turn <= 180.0:
            raise ConfigError("predator_max_turn must lie in (0, 180]")
        if not 0.0 < self.prey_max_turn <= 180.0:
            raise ConfigError("prey_max_turn must lie in (0, 180]")
        if self.num_agents < 1:
            raise ConfigError("num_agents must be >= 1")
        if self.leap_speed_factor <= 1.0:
            raise ConfigError("leap_speed_factor must exceed 1")
        for name in ("lock_duration", "leap_duration", "leap_cooldown", "max_episode_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")

    def replace(self, **changes) -> "WorldConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class AgentState:
    id: int
    pos: np.ndarray
    orientation: float
    alive_steps: int = 0


@dataclass
class PredatorState:
    pos: np.ndarray
    orientation: float
    target_id: Optional[int] = None
    lock_remaining: int = 0
    leap_remaining: int = 0
    leap_cooldown: int = 0

    def copy(self) -> "PredatorState":
        return dataclasses.replace(self, pos=self.pos.copy())


@dataclass
class StepEvents:
    caught: list = field(default_factory=list)
    respawns: list = field(default_factory=list)


@dataclass
class WorldState:
    """Prey are stored as parallel arrays indexed by agent id."""

    positions: np.ndarray
    orientations: np.ndarray
    alive_steps: np.ndarray
    predator: PredatorState
    rng: np.random.Generator
    frame: int = 0

    @property
    def num_agents(self) -> int:
        return len(self.orientations)

    def agent(self, i: int) -> AgentState:
        return AgentState(
            i, self.positions[i].copy(), float(self.orientations[i]), int(self.alive_steps[i])
        )

    def agents(self) -> list:
        return [self.agent(i) for i in range(self.num_agents)]

    def copy(self) -> "WorldState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return WorldState(
            self.positions.copy(),
            self.orientations.copy(),
            self.alive_steps.copy(),
            self.predator.copy(),
            rng,
            self.frame,
        )


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def reset_world(cfg: WorldConfig, rng=None, num_agents: Optional[int] = None) -> WorldState:
    """Fresh world with uniformly random prey and predator placement."""
    if rng is None:
        rng = make_rng(cfg.rng_seed)
    elif not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    n = cfg.num_agents if num_agents is None else num_agents
    L = cfg.edge_length
    positions = rng.uniform(0.0, L, size=(n, 2))
    orientations = rng.uniform(0.0, 360.0, size=n)
    pred = PredatorState(
        pos=rng.uniform(0.0, L, size=2),
        orientation=float(rng.uniform(0.0, 360.0)),
        leap_cooldown=cfg.leap_cooldown,
    )
    return WorldState(
        wrap_position(positions, L),
        wrap_angle(orientations),
        np.zeros(n, dtype=np.int64),
        pred,
        rng,
    )


def _select_target(state: WorldState, cfg: WorldConfig, rng) -> int:
    d = torus_distance(state.predator.pos, state.positions, cfg.edge_length)
    near = np.flatnonzero(d <= cfg.distraction_radius)
    if len(near) > 0:
        return int(near[rng.integers(len(near))])
    return int(np.argmin(d))


def predator_step(state: WorldState, cfg: WorldConfig, rng=None) -> PredatorState:
    """Return the predator's next state; ``state`` is not modified."""
    rng = state.rng if rng is None else rng
    p = state.predator.copy()
    if cfg.pin_predator:
        return p
    if state.num_agents == 0:
        raise ConfigError("predator needs at least one agent")

    if p.target_id is None or p.lock_remaining <= 0:
        p.target_id = _select_target(state, cfg, rng)
        p.lock_remaining = cfg.lock_duration

    turn = torus_direction(p.pos, p.orientation, state.positions[p.target_id], cfg.edge_length)
    turn = float(np.clip(turn, -cfg.predator_max_turn, cfg.predator_max_turn))
    p.orientation = wrap_angle(p.orientation + turn)

    speed = cfg.predator_speed
    if p.leap_remaining > 0:
        speed *= cfg.leap_speed_factor
    p.pos = wrap_position(p.pos + speed * unit_vector(p.orientation), cfg.edge_length)

    p.lock_remaining = max(p.lock_remaining - 1, 0)
    if p.leap_remaining > 0:
        p.leap_remaining -= 1
    else:
        p.leap_cooldown -= 1
        if p.leap_cooldown <= 0:
            p.leap_remaining = cfg.leap_duration
            p.leap_cooldown = cfg.leap_cooldown
    return p


def step_world(state: WorldState, actions, cfg: WorldConfig, rng=None):
    """Advance ``state`` in place by one frame and return ``(state, events)``.

    ``actions`` holds one turn angle (degrees) per agent.
    """
    rng = state.rng if rng is None else rng
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (state.num_agents,):
        raise ConfigError(
            f"expected {state.num_agents} actions, got shape {actions.shape}"
        )
    if not np.all(np.isfinite(actions)):
        raise ConfigError("actions must be finite")
    L = cfg.edge_length

    turns = np.clip(wrap_turn(actions), -cfg.prey_max_turn, cfg.prey_max_turn)
    state.orientations = wrap_angle(state.orientations + turns)
    state.positions = wrap_position(
        state.positions + cfg.agent_speed * unit_vector(state.orientations), L
    )

    state.predator = predator_step(state, cfg, rng)

    events = StepEvents()
    d = torus_distance(state.predator.pos, state.positions, L)
    state.alive_steps += 1
    for i in np.flatnonzero(d < cfg.catch_distance):
        i = int(i)
        new_pos = rng.uniform(0.0, L, size=2)
        state.positions[i] = wrap_position(new_pos, L)
        state.orientations[i] = wrap_angle(rng.uniform(0.0, 360.0))
        state.alive_steps[i] = 0
        events.caught.append(i)
        events.respawns.append((i, state.positions[i].copy()))
        if state.predator.target_id == i:
            state.predator.target_id = None
            state.predator.lock_remaining = 0
    state.frame += 1
    return state, events


def reward_for(agent_id: int, events: StepEvents) -> float:
    return CATCH_REWARD if agent_id in events.caught else ALIVE_REWARD


def _check_neighbors(n: int, num_agents: int) -> None:
    if n < 0 or n > num_agents - 1:
        raise ConfigError(
            f"cannot observe {n} neighbours with only {num_agents} agents"
        )


def build_observation(state: WorldState, agent_id: int, n: int, cfg: WorldConfig) -> np.ndarray:
    """Observation matrix of shape ``(n + 2, 3)`` for one agent.

    Rows are the predator, the agent itself and its ``n`` nearest neighbours
    in ascending distance. Columns are distance / (L*sqrt(2)/2),
    (bearing + 180) / 360 and orientation / 360.
    """
    _check_neighbors(n, state.num_agents)
    L = cfg.edge_length
    dmax = max_torus_distance(L)
    me = state.positions[agent_id]
    facing = float(state.orientations[agent_id])

    def row(pos, orientation):
        return (
            torus_distance(me, pos, L) / dmax,
            (torus_direction(me, facing, pos, L) + 180.0) / 360.0,
            orientation / 360.0,
        )

    rows = [row(state.predator.pos, state.predator.orientation), (0.0, 0.0, facing / 360.0)]
    others = [j for j in range(state.num_agents) if j != agent_id]
    others.sort(key=lambda j: torus_distance(me, state.positions[j], L))
    for j in others[:n]:
        rows.append(row(state.positions[j], float(state.orientations[j])))
    return np.array(rows, dtype=np.float64)


def build_observations(state: WorldState, n: int, cfg: WorldConfig, ids=None) -> np.ndarray:
    """Batched ``build_observation`` for ``ids`` (default: all agents)."""
    N = state.num_agents
    _check_neighbors(n, N)
    L = cfg.edge_length
    dmax = max_torus_distance(L)
    ids = np.arange(N) if ids is None else np.asarray(ids, dtype=np.int64)
    pos = state.positions
    ori = state.orientations
    me = pos[ids]
    facing = ori[ids]
    out = np.empty((len(ids), n + 2, 3))

    d_pred = torus_displacement(me, state.predator.pos[None, :], L)
    out[:, 0, 0] = np.sqrt(np.sum(d_pred**2, axis=-1)) / dmax
    out[:, 0, 1] = (torus_directions(d_pred, facing) + 180.0) / 360.0
    out[:, 0, 2] = state.predator.orientation / 360.0
    out[:, 1, 0] = 0.0
    out[:, 1, 1] = 0.0
    out[:, 1, 2] = facing / 360.0
    if n == 0:
        return out

    disp = torus_displacement(me[:, None, :], pos[None, :, :], L)
    dist = np.sqrt(np.sum(disp**2, axis=-1))
    dist[np.arange(len(ids)), ids] = np.inf
    order = np.argsort(dist, axis=1, kind="stable")[:, :n]
    rows = np.arange(len(ids))[:, None]
    nd = disp[rows, order]
    out[:, 2:, 0] = dist[rows, order] / dmax
    out[:, 2:, 1] = (torus_directions(nd, facing[:, None]) + 180.0) / 360.0
    out[:, 2:, 2] = ori[order] / 360.0
    return out
