"""Command-line entry point: single runs, one-axis sweeps, two-axis grids.

Every run writes the same artifact set into --out: metrics.json,
timeseries.csv, drift.csv, trajectory.jsonl, and train_log.csv for the
learning policies. Outputs are byte-identical across reruns with the same
arguments.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from maredge import hasac, schedulers
from maredge.config import ConfigError, SimConfig, config_from_dict, load_config
from maredge.env import MaritimeMecEnv
from maredge.hasac import HaA2cTrainer, HasacTrainer, TrainerConfig

BASELINES = ("ph", "gct", "clb", "ro", "oracle")
LEARNERS = ("hasac", "haa2c")
_INT_FIELDS = {"num_miot", "num_uav", "num_vessel", "horizon", "num_channels",
               "antenna_limit", "rng_seed"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maredge",
        description="Maritime edge offloading simulator and training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field")
        p.add_argument("--policy", required=True,
                       choices=sorted(BASELINES + LEARNERS))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--episodes", type=int, default=None,
                       help="episodes (training episodes for learners)")
        p.add_argument("--hidden", type=int, nargs="+", default=None,
                       help="policy/critic hidden layer sizes")
        p.add_argument("--activation", default=None,
                       help="hidden activation for the learners")
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--update-every", type=int, default=None)

    run_p = sub.add_parser("run", help="single run with one policy")
    add_common(run_p)

    sweep_p = sub.add_parser("sweep", help="run a policy across one config axis")
    add_common(sweep_p)
    sweep_p.add_argument("--axis", required=True, help="config field to vary")
    sweep_p.add_argument("--values", required=True, nargs="+",
                         help="values for the axis")

    grid_p = sub.add_parser("grid", help="cross two config axes")
    add_common(grid_p)
    grid_p.add_argument("--axis", required=True)
    grid_p.add_argument("--values", required=True, nargs="+")
    grid_p.add_argument("--axis2", required=True)
    grid_p.add_argument("--values2", required=True, nargs="+")
    return parser


def _parse_value(field: str, text: str):
    return int(text) if field in _INT_FIELDS else float(text)


def _build_config(args) -> SimConfig:
    data = {}
    if args.config:
        cfg = load_config(args.config)
        data = dataclasses.asdict(cfg)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        data[key] = _parse_value(key, value)
    return config_from_dict(data) if data else SimConfig()


def _trainer_config(args, cfg: SimConfig) -> TrainerConfig:
    tcfg = TrainerConfig(seed=args.seed)
    if args.episodes is not None:
        tcfg.episodes = args.episodes
    if args.hidden is not None:
        tcfg.hidden = tuple(args.hidden)
    if args.activation is not None:
        tcfg.activation = args.activation
    if args.lr is not None:
        tcfg.lr = args.lr
    if args.batch_size is not None:
        tcfg.batch_size = args.batch_size
    if args.update_every is not None:
        tcfg.update_every = args.update_every
    return tcfg


# ---------------------------------------------------------------------------
# runs


def run_baseline(cfg: SimConfig, policy: str, seed: int,
                 episodes: int = 1) -> tuple[MaritimeMecEnv, dict]:
    env = MaritimeMecEnv(cfg, seed=seed)
    ro_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    rewards = []
    metric_rows = []
    for ep in range(episodes):
        env.reset(seed=seed + ep)
        done = False
        while not done:
            view = env.view()
            if policy == "ro":
                action = schedulers.ro_decide(view, ro_rng)
            elif policy == "oracle":
                action, _ = schedulers.brute_force_oracle(view)
            else:
                action = schedulers.POLICIES[policy](view)
            _, reward, done, _ = env.step_joint(action)
            rewards.append(reward)
        metric_rows.append(env.ledger.metrics())
    metrics = {
        "policy": policy,
        "seed": seed,
        "episodes": episodes,
        "mean_reward": float(np.mean(rewards)),
        "avg_completion": float(np.mean([m.avg_completion for m in metric_rows])),
        "avg_response": float(np.mean([m.avg_response for m in metric_rows])),
        "edge_pct": float(np.mean([m.edge_pct for m in metric_rows])),
        "completed_tasks": int(sum(m.completed_tasks for m in metric_rows)),
    }
    return env, metrics


def run_learner(cfg: SimConfig, policy: str, seed: int, tcfg: TrainerConfig,
                checkpoint_dir: str | None = None):
    cls = HasacTrainer if policy == "hasac" else HaA2cTrainer
    trainer = cls(cfg, tcfg)
    logs = trainer.train()
    if checkpoint_dir is not None:
        trainer.save(checkpoint_dir)
    # deterministic evaluation episode after training
    env = trainer.env
    obs = env.reset(seed=seed)
    rewards = []
    done = False
    while not done:
        raw, _ = trainer.act(obs, deterministic=True)
        obs, reward, done, _ = env.step(raw)
        rewards.append(reward)
    m = env.ledger.metrics()
    metrics = {
        "policy": policy,
        "seed": seed,
        "episodes": tcfg.episodes,
        "mean_reward": float(np.mean(rewards)),
        "avg_completion": m.avg_completion,
        "avg_response": m.avg_response,
        "edge_pct": m.edge_pct,
        "completed_tasks": m.completed_tasks,
        "final_train_reward": logs[-1].mean_reward if logs else float("nan"),
    }
    return env, metrics, logs


def write_artifacts(out_dir: str, env: MaritimeMecEnv, metrics: dict,
                    logs: list | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "timeseries.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "reward", "phi", "objective",
                         "bits_local", "bits_uav", "bits_vessel"])
        for r in env.records:
            writer.writerow([r.slot] + [repr(float(v)) for v in (
                r.reward, r.phi, r.objective,
                r.bits_local, r.bits_uav, r.bits_vessel)])
    with open(os.path.join(out_dir, "drift.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "lyapunov", "drift", "penalty", "objective",
                         "d_const", "bound_slack", "bound_holds"])
        for t, rep in enumerate(env.drift_reports):
            writer.writerow([t] + [repr(float(v)) for v in (
                rep.l_t, rep.drift, rep.penalty, rep.objective, rep.d_const,
                rep.bound_slack)] + [int(rep.bound_holds)])
    env.write_trajectory(os.path.join(out_dir, "trajectory.jsonl"))
    env.ledger.write_event_log(os.path.join(out_dir, "events.csv"))
    if logs is not None:
        with open(os.path.join(out_dir, "train_log.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "steps", "mean_reward", "avg_completion",
                             "avg_response", "edge_pct", "critic_loss"])
            for log in logs:
                writer.writerow([log.episode, log.steps, repr(log.mean_reward),
                                 repr(log.avg_completion), repr(log.avg_response),
                                 repr(log.edge_pct), repr(log.critic_loss)])


def _one_run(cfg: SimConfig, args, out_dir: str) -> dict:
    if args.policy in LEARNERS:
        tcfg = _trainer_config(args, cfg)
        env, metrics, logs = run_learner(
            cfg, args.policy, args.seed, tcfg,
            checkpoint_dir=os.path.join(out_dir, "checkpoints"))
        write_artifacts(out_dir, env, metrics, logs)
    else:
        episodes = args.episodes if args.episodes is not None else 1
        env, metrics = run_baseline(cfg, args.policy, args.seed, episodes)
        write_artifacts(out_dir, env, metrics)
    return metrics


def cmd_run(args) -> int:
    cfg = _build_config(args)
    _one_run(cfg, args, args.out)
    return 0


def _write_summary(path: str, rows: list[dict]) -> None:
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            values = [row.get(k, "") for k in keys]
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in values])


def cmd_sweep(args) -> int:
    base = _build_config(args)
    rows = []
    for text in args.values:
        value = _parse_value(args.axis, text)
        cfg = base.replace(**{args.axis: value})
        cell = os.path.join(args.out, f"{args.axis}_{text}")
        metrics = _one_run(cfg, args, cell)
        rows.append({args.axis: value, **metrics})
    os.makedirs(args.out, exist_ok=True)
    _write_summary(os.path.join(args.out, "summary.csv"), rows)
    return 0


def cmd_grid(args) -> int:
    base = _build_config(args)
    rows = []
    for t1 in args.values:
        for t2 in args.values2:
            v1 = _parse_value(args.axis, t1)
            v2 = _parse_value(args.axis2, t2)
            cfg = base.replace(**{args.axis: v1, args.axis2: v2})
            cell = os.path.join(args.out, f"{args.axis}_{t1}__{args.axis2}_{t2}")
            metrics = _one_run(cfg, args, cell)
            rows.append({args.axis: v1, args.axis2: v2, **metrics})
    os.makedirs(args.out, exist_ok=True)
    _write_summary(os.path.join(args.out, "summary.csv"), rows)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "grid":
            return cmd_grid(args)
    except (ConfigError, schedulers.InstanceTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
