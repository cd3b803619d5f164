"""Command-line entry point: ``preyflock {train,eval,analyze,render,sweep}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import analysis
from .config import load_config
from .errors import ConfigError
from .fileio import ModelFormatError, TrajectoryFormatError
from .rl.training import TrainingDiverged


def _common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, action="append",
                   help="seed (repeatable); overrides 'seeds' from the config")
    p.add_argument("--out", help="output directory; overrides 'output_dir'")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preyflock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DQN or DDPG prey policy")
    _common(p)
    p.add_argument("--algo", choices=["dqn", "ddpg"])
    p.add_argument("--steps", type=int, help="override training_steps")

    p = sub.add_parser("eval", help="run evaluation episodes and log trajectories")
    _common(p)
    p.add_argument("--policy", choices=["random", "turnaway", "boids", "dqn", "ddpg"])
    p.add_argument("--model", help="model file for dqn/ddpg policies")
    p.add_argument("--agents", type=int, help="override num_agents")
    p.add_argument("--episodes", type=int)
    p.add_argument("--pin-predator", action="store_true", help="hold the predator in place")
    p.add_argument("--no-trajectories", action="store_true")

    p = sub.add_parser("analyze", help="compute swarm metric tables from trajectory CSVs")
    _common(p)
    p.add_argument("trajectories", nargs="*")
    p.add_argument("--eps", type=float, default=analysis.DEFAULT_EPS)
    p.add_argument("--min-pts", type=int, default=analysis.DEFAULT_MIN_PTS)
    p.add_argument("--bandwidth", type=float, default=analysis.DEFAULT_BANDWIDTH)
    p.add_argument("--transient", type=int, default=analysis.TRANSIENT_FRAMES)
    p.add_argument("--every", type=int, default=1, help="analyse every k-th frame")

    p = sub.add_parser("render", help="write one PPM image per trajectory frame")
    _common(p)
    p.add_argument("trajectory")
    p.add_argument("--scale", type=int, default=8, help="pixels per world unit")
    p.add_argument("--kde", action="store_true", help="draw the density heat layer")
    p.add_argument("--bandwidth", type=float, default=analysis.DEFAULT_BANDWIDTH)

    p = sub.add_parser("sweep", help="grid search over sweep.* axes from the config")
    _common(p)
    p.add_argument("--jobs", type=int)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed:
        cfg = dataclasses.replace(cfg, seeds=list(args.seed))
    if args.out:
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import commands

    try:
        cfg = _load(args)
        if args.command == "train":
            if args.algo:
                cfg = dataclasses.replace(cfg, algo=args.algo)
            if args.steps is not None:
                algo_cfg = dataclasses.replace(cfg.algo_cfg, training_steps=args.steps)
                cfg = dataclasses.replace(cfg, **{cfg.algo: algo_cfg})
            for seed, path in commands.cmd_train(cfg).items():
                print(f"seed {seed}: {path}")
        elif args.command == "eval":
            changes = {}
            if args.policy:
                changes["policy"] = args.policy
            if args.model:
                changes["model"] = args.model
            if args.episodes:
                changes["episodes"] = args.episodes
            if args.no_trajectories:
                changes["record_trajectories"] = False
            world = cfg.world
            if args.agents:
                world = dataclasses.replace(world, num_agents=args.agents)
            if args.pin_predator:
                world = dataclasses.replace(world, pin_predator=True)
            cfg = dataclasses.replace(cfg, world=world, **changes)
            results = commands.cmd_eval(cfg)
            mean = sum(r.length for r in results) / len(results)
            print(f"{len(results)} episodes, mean length {mean:.1f}")
        elif args.command == "analyze":
            written = commands.cmd_analyze(
                args.trajectories, cfg.output_dir, cfg.world.edge_length, args.eps,
                args.min_pts, args.bandwidth, args.transient, args.every,
            )
            for path in written.values():
                print(path)
        elif args.command == "render":
            paths = commands.cmd_render(
                args.trajectory, cfg.output_dir, cfg.world.edge_length, args.scale,
                args.kde, args.bandwidth, cfg.world.agent_radius,
            )
            print(f"{len(paths)} frames written to {cfg.output_dir}")
        elif args.command == "sweep":
            if args.jobs:
                cfg = dataclasses.replace(cfg, sweep_jobs=args.jobs)
            ranked = commands.cmd_sweep(cfg)
            for cell, mean, _, _, err in ranked[:5]:
                print(f"{mean:10.1f}  {cell}  {err}")
    except TrainingDiverged as exc:
        print(f"error: {exc} (checkpoint: {exc.checkpoint})", file=sys.stderr)
        return 3
    except (ConfigError, ModelFormatError, TrajectoryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
