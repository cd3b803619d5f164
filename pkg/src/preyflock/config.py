"""Flat key-value run configuration.

One ``key = value`` per line, ``#`` starts a comment. World settings use the
bare ``WorldConfig`` field names; other groups are prefixed (``boids.``,
``dqn.``, ``ddpg.``). Sweep axes are ``sweep.<key> = v1, v2, ...``. Unknown
keys are errors. Any key can be overridden from the environment as
``PREYFLOCK_<KEY>`` with dots written as double underscores, e.g.
``PREYFLOCK_DQN__BATCH_SIZE=32``.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .env import WorldConfig
from .errors import ConfigError
from .policies import BoidsWeights
from .rl.ddpg import DdpgConfig
from .rl.dqn import DqnConfig

ENV_PREFIX = "PREYFLOCK_"
POLICIES = ("random", "turnaway", "boids", "dqn", "ddpg")
ALGOS = ("dqn", "ddpg")

_TOP_LEVEL = {
    "policy": str,
    "model": str,
    "algo": str,
    "episodes": int,
    "seeds": "seeds",
    "output_dir": str,
    "record_trajectories": bool,
    "sweep_jobs": int,
}
_GROUPS = {"boids": BoidsWeights, "dqn": DqnConfig, "ddpg": DdpgConfig}


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    policy: str = "turnaway"
    model: Optional[str] = None
    boids: BoidsWeights = field(default_factory=BoidsWeights)
    algo: str = "dqn"
    dqn: DqnConfig = field(default_factory=DqnConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    episodes: int = 10
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs/out"
    record_trajectories: bool = True
    sweep_jobs: int = 1
    sweep: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        for group in (self.world, self.boids, self.dqn, self.ddpg):
            group.__post_init__()

    @property
    def algo_cfg(self):
        return self.dqn if self.algo == "dqn" else self.ddpg


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(kind, text: str):
    text = text.strip()
    if kind == "seeds":
        return [int(s) for s in text.replace(",", " ").split()]
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        return int(float(text)) if "e" in text.lower() else int(text.replace("_", ""))
    if kind is float:
        return float(text)
    if text.lower() in ("", "none"):
        return None
    return text


def _field_kind(obj, name: str):
    return type(getattr(obj, name))


def _set_group_field(obj, name: str, text: str):
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise KeyError(name)
    # validation is deferred to RunConfig.validate so that coupled keys
    # (agent_radius / catch_distance) can be set one line at a time
    new = copy.copy(obj)
    setattr(new, name, _parse_value(_field_kind(obj, name), text))
    return new


def apply_setting(cfg: RunConfig, key: str, text: str) -> RunConfig:
    """Return ``cfg`` with one ``key = text`` setting applied."""
    key = key.strip()
    try:
        if key.startswith("sweep."):
            axis = key[len("sweep."):]
            apply_setting(cfg, axis, text.split(",")[0])  # validates the key
            values = [v.strip() for v in text.split(",") if v.strip()]
            return dataclasses.replace(cfg, sweep={**cfg.sweep, axis: values})
        if "." in key:
            group, name = key.split(".", 1)
            if group not in _GROUPS:
                raise KeyError(key)
            return dataclasses.replace(cfg, **{group: _set_group_field(getattr(cfg, group), name, text)})
        if key in _TOP_LEVEL:
            return dataclasses.replace(cfg, **{key: _parse_value(_TOP_LEVEL[key], text)})
        return dataclasses.replace(cfg, world=_set_group_field(cfg.world, key, text))
    except KeyError:
        raise ConfigError(f"unknown config key {key!r}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def parse_config(text: str, base: Optional[RunConfig] = None, source: str = "<config>") -> RunConfig:
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        try:
            cfg = apply_setting(cfg, key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def apply_env(cfg: RunConfig, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            cfg = apply_setting(cfg, key, environ[name])
    return cfg


def load_config(path=None, environ=None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg = parse_config(path.read_text(), cfg, str(path))
    cfg = apply_env(cfg, environ)
    cfg.validate()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def config_items(cfg: RunConfig) -> list:
    """All settings as sorted ``(key, text)`` pairs, sweep axes excluded."""
    items = []
    for f in dataclasses.fields(cfg.world):
        items.append((f.name, _fmt(getattr(cfg.world, f.name))))
    for group in _GROUPS:
        obj = getattr(cfg, group)
        for f in dataclasses.fields(obj):
            items.append((f"{group}.{f.name}", _fmt(getattr(obj, f.name))))
    for key in _TOP_LEVEL:
        items.append((key, _fmt(getattr(cfg, key))))
    return sorted(items)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"{k} = {v}" for k, v in config_items(cfg)]
    for axis, values in sorted(cfg.sweep.items()):
        lines.append(f"sweep.{axis} = {', '.join(values)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical settings that affect results (output paths excluded)."""
    text = "\n".join(f"{k}={v}" for k, v in config_items(cfg) if k != "output_dir")
    return hashlib.sha256(text.encode()).hexdigest()
