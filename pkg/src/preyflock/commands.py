"""Implementations behind the ``preyflock`` sub-commands."""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .config import RunConfig, apply_setting, config_hash, config_items, dump_config
from .errors import ConfigError
from .evaluation import evaluate, run_episode
from .fileio import (
    ModelFile,
    load_model,
    provenance_line,
    read_trajectory,
    save_model,
    write_csv,
    write_manifest,
    write_trajectory,
)
from .policies import BoidsPolicy, DdpgPolicy, DqnPolicy, RandomTurnPolicy, TurnAwayPolicy
from .render import render_trajectory
from .rl.training import run_training

log = logging.getLogger(__name__)

CURVE_COLUMNS = ["episode", "length", "return", "epsilon_or_noise_sigma", "wall_steps"]
EPISODE_COLUMNS = ["seed", "episode", "num_agents", "length", "tracked_caught", "catches",
                   "caught_per_frame"]


def _model_record(cfg: RunConfig, params, role: str, seed: int, chash: str) -> ModelFile:
    algo_keys = {k: v for k, v in config_items(cfg) if k.startswith(cfg.algo + ".")}
    return ModelFile(params, cfg.algo, role, cfg.algo_cfg.observable_neighbors, seed, chash, algo_keys)


def cmd_train(cfg: RunConfig) -> dict:
    """Train one model per seed; returns ``{seed: final model path}``."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    artifacts, finals = [], {}
    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}" if len(cfg.seeds) > 1 else out

        def checkpoint(run, tag, seed=seed, seed_dir=seed_dir):
            path = seed_dir / "checkpoints" / f"{tag}.bin"
            save_model(path, _model_record(cfg, run.policy, "policy", seed, chash))
            return path

        run = run_training(cfg.algo, cfg.world, cfg.algo_cfg, seed, checkpoint=checkpoint)
        final = save_model(seed_dir / "model.bin", _model_record(cfg, run.policy, "policy", seed, chash))
        artifacts.append(final)
        if cfg.algo == "ddpg":
            artifacts.append(save_model(
                seed_dir / "critic.bin", _model_record(cfg, run.networks["critic"], "critic", seed, chash)
            ))
        rows = [(e.episode, e.length, e.ret, e.exploration, e.wall_steps) for e in run.episodes]
        artifacts.append(write_csv(
            seed_dir / "training_curve.csv", CURVE_COLUMNS, rows, provenance_line(chash, seed)
        ))
        artifacts.extend(run.checkpoints)
        finals[seed] = final
        log.info("seed %d: %d episodes, final model %s", seed, len(run.episodes), final)
    write_manifest(out, "train", chash, cfg.seeds, dump_config(cfg),
                   [Path(a).relative_to(out) for a in artifacts])
    return finals


def make_policy(cfg: RunConfig):
    if cfg.policy == "random":
        return RandomTurnPolicy()
    if cfg.policy == "turnaway":
        return TurnAwayPolicy()
    if cfg.policy == "boids":
        return BoidsPolicy(cfg.boids)
    if not cfg.model:
        raise ConfigError(f"policy {cfg.policy!r} needs a model file")
    m = load_model(cfg.model)
    if m.algo != cfg.policy:
        raise ConfigError(f"model {cfg.model} was trained with {m.algo}, not {cfg.policy}")
    cls = DqnPolicy if cfg.policy == "dqn" else DdpgPolicy
    return cls(m.params, m.observable_neighbors)


def cmd_eval(cfg: RunConfig) -> list:
    """Evaluate ``cfg.policy`` for ``cfg.episodes`` episodes per seed."""
    cfg.validate()
    policy = make_policy(cfg)
    n = policy.neighbors
    if n is not None and cfg.world.num_agents < n + 1:
        raise ConfigError(f"population {cfg.world.num_agents} < {n + 1} required by the model")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    artifacts, rows, results = [], [], []
    for seed in cfg.seeds:
        for ep in range(cfg.episodes):
            res = run_episode(policy, cfg.world, seed, ep, record=cfg.record_trajectories)
            results.append(res)
            cpf = analysis.caught_per_frame(res.catches, res.length)
            rows.append((seed, ep, cfg.world.num_agents, res.length, int(res.tracked_caught),
                         res.catches, float("nan") if cpf is None else cpf))
            if res.trajectory is not None:
                artifacts.append(write_trajectory(
                    out / "trajectories" / f"traj_s{seed}_e{ep:04d}.csv",
                    res.trajectory,
                    provenance_line(chash, seed, episode=ep, edge_length=cfg.world.edge_length),
                ))
    artifacts.append(write_csv(out / "episodes.csv", EPISODE_COLUMNS, rows, provenance_line(chash, cfg.seeds)))
    write_manifest(out, "eval", chash, cfg.seeds, dump_config(cfg),
                   [Path(a).relative_to(out) for a in artifacts])
    return results


FIGURE_FILES = {
    "fig4": ("fig4_angle_deviation.csv",
             ["source", "num_agents", "frames", "cluster_mean_deviation_deg", "all_mean_deviation_deg"]),
    "fig5": ("fig5_cluster_sizes.csv", ["source", "num_agents", "rank", "mean_agents"]),
    "fig7": ("fig7_pairwise.csv",
             ["source", "num_agents", "within_cluster_per_cluster", "within_cluster_pooled",
              "noise", "all"]),
    "fig8": ("fig8_episode_length.csv", ["source", "num_agents", "episode_length", "tracked_caught"]),
    "fig9": ("fig9_caught_per_frame.csv",
             ["source", "num_agents", "catches", "episode_length", "caught_per_frame"]),
    "fig10": ("fig10_density.csv", ["frames_before_death", "mean_density", "victims"]),
}


def cmd_analyze(paths, out_dir, L: float = 40.0, eps: float = analysis.DEFAULT_EPS,
                min_pts: int = analysis.DEFAULT_MIN_PTS, bandwidth: float = analysis.DEFAULT_BANDWIDTH,
                transient: int = analysis.TRANSIENT_FRAMES, every: int = 1) -> dict:
    """Compute the metric tables for a set of trajectory CSVs."""
    rows = {k: [] for k in FIGURE_FILES}
    trajs = []
    for p in sorted(Path(p) for p in paths):
        traj = read_trajectory(p)
        if traj.num_frames == 0:
            continue
        trajs.append(traj)
        src, N = p.name, traj.num_agents
        m = analysis.SwarmMetrics.from_frames(
            analysis.trajectory_metrics(traj, L, eps, min_pts, transient, every), N
        )
        rows["fig4"].append((src, N, m.frames, m.cluster_deviation, m.all_deviation))
        for k, size in enumerate(m.mean_sizes, 1):
            rows["fig5"].append((src, N, k, float(size)))
        rows["fig5"].append((src, N, "noise", m.mean_noise))
        rows["fig7"].append((src, N, m.cluster_pairwise, m.pooled_pairwise, m.noise_pairwise, m.all_pairwise))
        rows["fig8"].append((src, N, traj.episode_length, int(traj.caught[-1, 0])))
        cpf = analysis.caught_per_frame(traj.total_catches, traj.episode_length, transient)
        rows["fig9"].append((src, N, traj.total_catches, traj.episode_length,
                             float("nan") if cpf is None else cpf))
    if trajs:
        trace = analysis.density_before_death(trajs, bandwidth, L)
        if trace.count:
            window = len(trace.mean)
            rows["fig10"] = [(window - k, float(v), trace.count) for k, v in enumerate(trace.mean)]

    out = Path(out_dir)
    written = {}
    for key, (name, cols) in FIGURE_FILES.items():
        written[key] = write_csv(out / name, cols, rows[key])
    settings = f"L={L!r} eps={eps!r} min_pts={min_pts} bandwidth={bandwidth!r} transient={transient} every={every}"
    write_manifest(out, "analyze", hashlib.sha256(settings.encode()).hexdigest(), [],
                   settings + "\n", [p.name for p in written.values()])
    return written


def cmd_render(traj_path, out_dir, L: float = 40.0, scale: int = 8, heat: bool = False,
               bandwidth: float = analysis.DEFAULT_BANDWIDTH, radius: float = 1.0) -> list:
    traj = read_trajectory(traj_path)
    return render_trajectory(traj, out_dir, L, scale, heat, bandwidth, radius)


def _sweep_cells(cfg: RunConfig):
    axes = sorted(cfg.sweep)
    for values in itertools.product(*(cfg.sweep[a] for a in axes)):
        yield dict(zip(axes, values))


def _run_cell(cfg: RunConfig, cell: dict):
    try:
        c = dataclasses.replace(cfg, sweep={})
        for k, v in cell.items():
            c = apply_setting(c, k, v)
        c.validate()
        res = evaluate(make_policy(c), c.world, c.seeds, c.episodes)
        lengths = [r.length for r in res]
        return cell, float(np.mean(lengths)), float(np.std(lengths)), len(lengths), ""
    except Exception as exc:  # recorded per cell; the sweep carries on
        return cell, float("nan"), float("nan"), 0, f"{type(exc).__name__}: {exc}"


def cmd_sweep(cfg: RunConfig) -> list:
    """Grid search ranked by mean episode length (descending).

    Writes ``sweep.csv`` and ``best.cfg`` (the best cell as a full config).
    """
    cfg.validate()
    if not cfg.sweep:
        raise ConfigError("no sweep axes given (use sweep.<key> = v1, v2, ...)")
    cells = list(_sweep_cells(cfg))
    if cfg.sweep_jobs > 1:
        with ProcessPoolExecutor(cfg.sweep_jobs) as pool:
            results = list(pool.map(_run_cell, [cfg] * len(cells), cells))
    else:
        results = [_run_cell(cfg, cell) for cell in cells]

    ok = sorted((r for r in results if not r[4]), key=lambda r: -r[1])
    failed = [r for r in results if r[4]]
    ranked = ok + failed
    axes = sorted(cfg.sweep)
    rows = [
        [rank if not r[4] else "", r[1], r[2], r[3], r[4]] + [r[0][a] for a in axes]
        for rank, r in enumerate(ranked, 1)
    ]
    out = Path(cfg.output_dir)
    chash = config_hash(cfg)
    write_csv(out / "sweep.csv", ["rank", "mean_episode_length", "std_episode_length", "episodes", "error"] + axes,
              rows, provenance_line(chash, cfg.seeds))
    artifacts = ["sweep.csv"]
    if ok:
        best = dataclasses.replace(cfg, sweep={})
        for k, v in ok[0][0].items():
            best = apply_setting(best, k, v)
        (out / "best.cfg").write_text(dump_config(best))
        artifacts.append("best.cfg")
    write_manifest(out, "sweep", chash, cfg.seeds, dump_config(cfg), artifacts)
    return ranked
