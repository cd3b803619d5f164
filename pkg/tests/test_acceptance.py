"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (also collected into the
terminal summary). Trained models are cached in the pytest cache directory,
keyed by a hash of the package source and the training settings, so repeated
runs only pay for training once.
"""
import dataclasses
import hashlib
import math
import time
from pathlib import Path

import numpy as np
import pytest

import preyflock
from conftest import ACCEPTANCE_LINES
from oracles import (
    brute_torus_distance,
    partition_matches,
    train_actor_on_quadratic,
    train_toy_dqn,
    value_iteration,
)
from preyflock import analysis
from preyflock.cli import run
from preyflock.config import load_config
from preyflock.env import WorldConfig
from preyflock.evaluation import evaluate, run_episode
from preyflock.fileio import ModelFile, load_model, save_model
from preyflock.geometry import max_torus_distance, torus_distance
from preyflock.policies import BoidsPolicy, DdpgPolicy, DqnPolicy, RandomTurnPolicy, TurnAwayPolicy
from preyflock.rl.ddpg import DdpgConfig
from preyflock.rl.dqn import DqnConfig
from preyflock.rl.training import run_training
from test_nn import gradient_check_errors

ROOT = Path(__file__).resolve().parents[1]
TUNED_BOIDS = ROOT / "configs" / "boids_tuned.cfg"
L = 40.0
DQN_SEEDS = range(5)
EVAL40_SEEDS = [1000 + k for k in range(5)]
EVAL40_EPISODES = 2


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def source_hash():
    h = hashlib.sha256()
    for p in sorted(Path(preyflock.__file__).parent.rglob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def model_cache(request):
    return Path(request.config.cache.mkdir("preyflock-models")), source_hash()


def trained(model_cache, algo, algo_cfg, world, seed):
    """Train (or reuse) a model; returns its policy parameters."""
    root, src = model_cache
    key = hashlib.sha256(f"{src}|{algo}|{algo_cfg!r}|{world!r}|{seed}".encode()).hexdigest()[:20]
    path = root / f"{algo}_{seed}_{key}.bin"
    if not path.exists():
        r = run_training(algo, world, algo_cfg, seed)
        save_model(path, ModelFile(r.policy, algo, "policy", algo_cfg.observable_neighbors, seed))
    return load_model(path).params


@pytest.fixture(scope="session")
def dqn_models(model_cache):
    cfg = DqnConfig(training_steps=100_000)
    world = WorldConfig(num_agents=10)
    return [trained(model_cache, "dqn", cfg, world, s) for s in DQN_SEEDS]


@pytest.fixture(scope="session")
def ddpg_model(model_cache):
    return trained(model_cache, "ddpg", DdpgConfig(training_steps=100_000), WorldConfig(num_agents=10), 0)


@pytest.fixture(scope="session")
def runs40(dqn_models, ddpg_model):
    """40-agent evaluation of the four policies on shared seeds.

    DQN model ``k`` plays evaluation seed ``1000 + k``.
    """
    world = WorldConfig(num_agents=40)
    boids = load_config(TUNED_BOIDS, environ={}).boids
    policies = {
        "turnaway": lambda k: TurnAwayPolicy(),
        "boids": lambda k: BoidsPolicy(boids),
        "dqn": lambda k: DqnPolicy(dqn_models[k], 5),
        "ddpg": lambda k: DdpgPolicy(ddpg_model, 1),
    }
    out = {}
    for name, make in policies.items():
        out[name] = {
            seed: [run_episode(make(k), world, seed, ep, record=True) for ep in range(EVAL40_EPISODES)]
            for k, seed in enumerate(EVAL40_SEEDS)
        }
    return out


def timed(fn):
    t = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t


def test_criterion_1_gradients():
    errs, dt = timed(lambda: gradient_check_errors(count=20))
    worst = max(errs)
    report(1, worst < 1e-4 and dt < 10, f"max rel err {worst:.2e} over {len(errs)} nets in {dt:.1f}s")


def test_criterion_2_dqn_oracle():
    q, dt = timed(train_toy_dqn)
    err = float(np.abs(q - value_iteration()).max())
    report(2, err < 0.01 and dt < 30, f"max |Q - Q*| {err:.4f} in {dt:.1f}s")


def test_criterion_3_actor_oracle():
    out, dt = timed(lambda: train_actor_on_quadratic(steps=2000))
    err = float(np.abs(out - 3.0).max())
    report(3, err < 0.05 and dt < 30, f"actor outputs {out.min():.4f}..{out.max():.4f} in {dt:.1f}s")


def test_criterion_4_dbscan():
    def check():
        rng = np.random.default_rng(2024)
        bad = 0
        for _ in range(200):
            centers = rng.uniform(0, L, size=(int(rng.integers(1, 6)), 2))
            pts = (centers[rng.integers(len(centers), size=50)] + rng.normal(0, 3, size=(50, 2))) % L
            eps, min_pts = float(rng.uniform(1, 5)), int(rng.integers(1, 6))
            bad += not partition_matches(analysis.dbscan(pts, eps, min_pts, L), pts, eps, min_pts, L)
        return bad

    bad, dt = timed(check)
    report(4, bad == 0 and dt < 60, f"{200 - bad}/200 partitions match the oracle in {dt:.1f}s")


def test_criterion_5_invariants():
    def check():
        rng = np.random.default_rng(7)
        a, b = rng.uniform(-L, 2 * L, size=(2, 1000, 2))
        fast = torus_distance(a, b, L)
        dist_err = max(abs(fast[k] - brute_torus_distance(a[k] % L, b[k] % L, L)) for k in range(1000))
        rot_err = 0.0
        for _ in range(500):
            ang = rng.uniform(0, 360, size=int(rng.integers(1, 20)))
            phi = rng.uniform(0, 360)
            m, r = analysis.circular_mean(ang), analysis.circular_mean(ang + phi)
            if not (m.degenerate or r.degenerate):
                rot_err = max(rot_err, abs((r.angle - m.angle - phi + 180) % 360 - 180))
        pts = rng.uniform(0, L, size=(25, 2))
        q = rng.uniform(0, L, size=(50, 2))
        per_err = float(np.abs(analysis.kde_density(pts, q, 2.0, L)
                               - analysis.kde_density(pts, q + [L, -L], 2.0, L)).max())
        step = 0.2
        g = np.arange(0, L, step) + step / 2
        grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
        total = float(analysis.kde_density(pts, grid, 2.0, L).sum() * step * step)
        return dist_err, rot_err, per_err, total

    (dist_err, rot_err, per_err, total), dt = timed(check)
    ok = dist_err < 1e-9 and rot_err < 1e-6 and per_err < 1e-12 and abs(total - 25) < 0.25 and dt < 60
    report(5, ok, f"distance err {dist_err:.1e}, rotation err {rot_err:.1e}, periodicity err {per_err:.1e}, "
                  f"KDE mass {total:.3f}/25 in {dt:.1f}s")


def test_criterion_6_determinism(tmp_path):
    cfg = tmp_path / "short.cfg"
    cfg.write_text("num_agents = 8\nmax_episode_steps = 300\ndqn.training_steps = 1500\n"
                   "dqn.warmup_steps = 200\ndqn.batch_size = 16\ndqn.buffer_size = 1000\n")
    for d in ("a", "b"):
        assert run(["train", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / d)]) == 0
    same_model = (tmp_path / "a" / "model.bin").read_bytes() == (tmp_path / "b" / "model.bin").read_bytes()
    for d in ("ea", "eb"):
        assert run(["eval", "--config", str(cfg), "--policy", "dqn", "--model", str(tmp_path / "a" / "model.bin"),
                    "--episodes", "2", "--seed", "5", "--out", str(tmp_path / d)]) == 0
    trajs = sorted(p.name for p in (tmp_path / "ea" / "trajectories").glob("*.csv"))
    same_traj = bool(trajs) and all(
        (tmp_path / "ea" / "trajectories" / n).read_bytes() == (tmp_path / "eb" / "trajectories" / n).read_bytes()
        for n in trajs
    )
    report(6, same_model and same_traj,
           f"models identical: {same_model}; {len(trajs)} trajectory replays identical: {same_traj}")


@pytest.mark.slow
def test_criterion_7_learning_signal(dqn_models):
    world = WorldConfig(num_agents=10)
    eval_seeds = [100 + k for k in DQN_SEEDS]
    dqn = [r.length for k, s in enumerate(eval_seeds)
           for r in evaluate(DqnPolicy(dqn_models[k], 5), world, [s], 20)]
    rnd = [r.length for r in evaluate(RandomTurnPolicy(), world, eval_seeds, 20)]
    ratio = np.mean(dqn) / np.mean(rnd)
    report(7, ratio >= 2.0, f"DQN mean length {np.mean(dqn):.1f} vs random {np.mean(rnd):.1f} "
                            f"(x{ratio:.2f}, {len(dqn)} episodes)")


@pytest.mark.slow
def test_criterion_8_turnaway_survives_longest(runs40):
    length = {k: np.mean([r.length for eps in v.values() for r in eps]) for k, v in runs40.items()}
    cpf = {
        k: analysis.aggregate_caught_per_frame({s: [(r.catches, r.length) for r in eps] for s, eps in v.items()})
        for k, v in runs40.items()
    }
    ok = all(length["turnaway"] >= length[o] for o in ("boids", "dqn")) and all(
        cpf["turnaway"] <= cpf[o] for o in ("boids", "dqn", "ddpg"))
    detail = ", ".join(f"{k} len {length[k]:.0f} cpf {cpf[k]:.4f}" for k in runs40)
    report(8, ok, detail)


@pytest.mark.slow
def test_criterion_9_turnaway_noise(runs40):
    noise = {}
    for name, by_seed in runs40.items():
        frames = [m for eps in by_seed.values() for r in eps
                  for m in analysis.trajectory_metrics(r.trajectory, L, every=10)]
        noise[name] = analysis.SwarmMetrics.from_frames(frames, 40).mean_noise
    others = [v for k, v in noise.items() if k != "turnaway"]
    ok = all(noise["turnaway"] > v for v in others)
    report(9, ok, ", ".join(f"{k} {v:.2f}" for k, v in noise.items()) + " mean noise points")


@pytest.mark.slow
def test_criterion_10_density_falls_before_capture(runs40):
    trace = analysis.density_before_death([r.trajectory for eps in runs40["dqn"].values() for r in eps])
    rho, p = analysis.density_trend(trace) if trace.count else (math.nan, math.nan)
    ok = trace.count > 0 and rho < 0 and p < 0.05
    report(10, ok, f"Spearman rho {rho:.3f} (p={p:.2g}) of density vs time elapsed toward capture "
                   f"over {trace.count} victims; first {trace.mean[0]:.4f}, last {trace.mean[-1]:.4f}"
           if trace.count else "no qualifying victims")


@pytest.mark.slow
def test_criterion_11_pinned_predator(dqn_models):
    world = dataclasses.replace(WorldConfig(num_agents=40), pin_predator=True)
    dist, frac = [], []
    for k, seed in enumerate(EVAL40_SEEDS[:3]):
        traj = run_episode(DqnPolicy(dqn_models[k], 5), world, seed, record=True, max_steps=1000).trajectory
        for t in range(analysis.TRANSIENT_FRAMES, traj.num_frames, 10):
            dist.append(np.mean(torus_distance(traj.pred_pos[t], traj.prey_pos[t], L)))
            m = analysis.frame_metrics(traj.prey_pos[t], traj.prey_ori[t], L)
            frac.append(max(m.sizes, default=0) / 40)
    ratio = np.mean(dist) / max_torus_distance(L)
    report(11, ratio > 0.35 and np.mean(frac) >= 0.5,
           f"mean distance {ratio:.3f} of max, largest cluster holds {np.mean(frac):.2f} of agents")
