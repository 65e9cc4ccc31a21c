"""Experiment front end.

Subcommands: ``gen-demos`` writes a demonstration dataset, ``train`` runs
one or more training runs from a config file (sweeps expand into a run
grid, each with its own artifact directory), ``eval`` summarizes a
checkpoint (or the scripted demonstrator) on held-out test tasks, and
``plot`` renders reward-versus-budget SVG figures from metrics files.

Exit codes: 0 success, 2 usage/configuration problems, 3 numerical failure
during training.  A training run leaves state.json, checkpoints, collected
rollouts, and metrics.csv in its run directory; rerunning the same config
resumes unfinished runs at the last epoch boundary and skips finished ones.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .checks import ValidationError
from .codec import H_MAX, H_PRIME
from .config import (ConfigError, estimator_kwargs, load_gen_demos_config,
                     load_train_configs, run_id)
from .checkpoints import load_checkpoint, save_checkpoint
from .datasets import (append_records_jsonl, generate_demo_dataset,
                       load_dataset, load_records_jsonl, save_dataset,
                       save_records_jsonl)
from .env import DEFAULT_DT
from .metrics import MetricsWriter, read_metrics, truncate_rows
from .plotting import make_reward_figure, save_reward_figure
from .policies import (METHODS, ResumePayload, TrainingDiverged,
                       evaluate_demonstrator, evaluate_policy)
from .rewards import REWARD_IDS
from .rng import substream

_THREAD_LIMITER = None


def _apply_thread_cap():
    global _THREAD_LIMITER
    value = os.environ.get("FLOWGYM_THREADS")
    if not value:
        return
    try:
        limit = int(value)
    except ValueError as exc:
        raise ConfigError(f"FLOWGYM_THREADS must be an integer, got "
                          f"{value!r}") from exc
    if limit < 1:
        raise ConfigError("FLOWGYM_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    _THREAD_LIMITER = threadpool_limits(limits=limit)


def cmd_gen_demos(args) -> int:
    cfg = load_gen_demos_config(args.config)
    dataset = generate_demo_dataset(
        count=cfg["count"], seed=cfg["seed"],
        dt=cfg.get("dt", DEFAULT_DT), h_max=cfg.get("h_max", H_MAX),
        h_prime=cfg.get("h_prime", H_PRIME))
    out = cfg["out"]
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    save_dataset(dataset, out)
    counts = {name: len(dataset.split(name)) for name in ("train", "val", "test")}
    print(f"wrote {len(dataset)} demos to {out} "
          f"(train/val/test = {counts['train']}/{counts['val']}/{counts['test']})")
    return 0


def _run_paths(run_dir: str) -> dict:
    return {
        "state": os.path.join(run_dir, "state.json"),
        "metrics": os.path.join(run_dir, "metrics.csv"),
        "policy": os.path.join(run_dir, "policy.ckpt"),
        "surrogate": os.path.join(run_dir, "surrogate.ckpt"),
        "best": os.path.join(run_dir, "best_policy.ckpt"),
        "collected": os.path.join(run_dir, "collected.jsonl"),
    }


def _write_state(path: str, state: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state, fh, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _prepare_resume(paths: dict, dataset, uses_surrogate: bool):
    """Restore a run directory to its persisted state and build the payload."""
    with open(paths["state"], "r", encoding="utf-8") as fh:
        state = json.load(fh)
    if state.get("done"):
        return state, None
    policy = load_checkpoint(paths["policy"])
    if policy.extra.get("epoch_global") != state["epoch_global"]:
        raise ConfigError(
            f"{paths['policy']}: checkpoint epoch "
            f"{policy.extra.get('epoch_global')} does not match state epoch "
            f"{state['epoch_global']}; artifacts are inconsistent, "
            f"delete the run directory to restart")
    truncate_rows(paths["metrics"], int(state.get("rows_written", 0)))
    n_collected = int(state["n_collected"])
    collected = []
    if os.path.exists(paths["collected"]):
        collected = load_records_jsonl(paths["collected"], dataset.dt)
        if len(collected) > n_collected:
            collected = collected[:n_collected]
            save_records_jsonl(collected, paths["collected"])
    if len(collected) != n_collected:
        raise ConfigError(
            f"{paths['collected']}: holds {len(collected)} records but state "
            f"expects {n_collected}; delete the run directory to restart")
    dataset.append(collected)
    surrogate_params = surrogate_opt = None
    if uses_surrogate:
        surrogate = load_checkpoint(paths["surrogate"])
        surrogate_params = surrogate.params
        surrogate_opt = surrogate.opt_state
    best_params = None
    if os.path.exists(paths["best"]):
        best_params = load_checkpoint(paths["best"]).params
    payload = ResumePayload(state=state, policy_params=policy.params,
                            policy_opt=policy.opt_state,
                            surrogate_params=surrogate_params,
                            surrogate_opt=surrogate_opt,
                            best_params=best_params)
    return state, payload


def _train_one(cfg: dict) -> str:
    rid = run_id(cfg)
    run_dir = os.path.join(cfg["out_dir"], rid)
    os.makedirs(run_dir, exist_ok=True)
    paths = _run_paths(run_dir)
    if not os.path.exists(cfg["dataset"]):
        raise ConfigError(f"dataset not found: {cfg['dataset']}")
    dataset = load_dataset(cfg["dataset"])

    estimator = METHODS[cfg["method"]](**estimator_kwargs(cfg))
    uses_surrogate = cfg["method"] == "grpo"

    resume = None
    rows_written = 0
    if os.path.exists(paths["state"]):
        state, resume = _prepare_resume(paths, dataset, uses_surrogate)
        if resume is None:
            print(f"{rid}: already complete, skipping")
            return rid
        rows_written = int(state.get("rows_written", 0))
        print(f"{rid}: resuming at iteration {state['iteration']} "
              f"epoch {state['epoch']}")

    writer = MetricsWriter(paths["metrics"])
    start = time.monotonic()
    counter = {"rows": rows_written}

    def hook(state, rows, records, is_new_best=False):
        if records:
            append_records_jsonl(records, paths["collected"])
        extra = {"run_id": rid, "epoch_global": state["epoch_global"],
                 "normalizer": estimator.normalizer_.to_dict()}
        save_checkpoint(paths["policy"], "velocity", estimator.arch_,
                        estimator.params_, estimator.opt_state_, extra=extra)
        if estimator.surrogate_params_ is not None:
            save_checkpoint(paths["surrogate"], "surrogate",
                            estimator.surrogate_arch_,
                            estimator.surrogate_params_,
                            estimator.surrogate_opt_, extra=extra)
        if is_new_best:
            save_checkpoint(paths["best"], "velocity", estimator.arch_,
                            estimator.best_params_, estimator.opt_state_,
                            extra=extra)
        wall = time.monotonic() - start
        writer.append([dict(row, run_id=rid, wall_clock_s=wall)
                       for row in rows])
        counter["rows"] += len(rows)
        _write_state(paths["state"], dict(state, rows_written=counter["rows"],
                                          run_id=rid))

    estimator.fit(dataset, hook=hook, resume=resume)
    if getattr(estimator, "interrupted_", False):
        print(f"{rid}: paused after epoch budget "
              f"({estimator.final_state_['epoch_global']} epochs)")
    else:
        print(f"{rid}: finished ({estimator.final_state_['epoch_global']} "
              f"epochs, best val {estimator.best_val_:.4f})")
    return rid


def cmd_train(args) -> int:
    configs = load_train_configs(args.config)
    print(f"{len(configs)} run(s) from {args.config}")
    for cfg in configs:
        _train_one(cfg)
    return 0


def cmd_eval(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    if args.reward not in REWARD_IDS:
        raise ConfigError(f"--reward must be one of {REWARD_IDS}")
    if not os.path.exists(args.dataset):
        raise ConfigError(f"dataset not found: {args.dataset}")
    dataset = load_dataset(args.dataset)
    records = dataset.split("test")
    if args.n > len(records):
        raise ConfigError(f"--n {args.n} exceeds the {len(records)} test "
                          f"records in {args.dataset}")
    records = records[:args.n]
    rng = substream(args.seed, "eval")

    if args.demo:
        result = evaluate_demonstrator(records, args.reward, rng,
                                       h_max=dataset.h_max, dt=dataset.dt)
    else:
        if not args.ckpt:
            raise ConfigError("--ckpt is required unless --demo is given")
        ckpt = load_checkpoint(args.ckpt)
        if ckpt.kind != "velocity":
            raise ConfigError(f"{args.ckpt}: expected a velocity checkpoint, "
                              f"got {ckpt.kind!r}")
        if ckpt.extra.get("normalizer") != dataset.normalizer.to_dict():
            raise ConfigError(
                f"{args.ckpt}: checkpoint normalizer does not match "
                f"{args.dataset}; evaluate against the training dataset")
        if ckpt.arch.h_prime != dataset.h_prime:
            raise ConfigError(
                f"{args.ckpt}: checkpoint h_prime {ckpt.arch.h_prime} does "
                f"not match dataset h_prime {dataset.h_prime}")
        result = evaluate_policy(ckpt.arch, ckpt.params, dataset.normalizer,
                                 records, args.reward, rng,
                                 steps=args.euler_steps, dt=dataset.dt)

    lines = [
        "reward,n_tasks,seed,mean_reward,std_reward,"
        "mean_position_term,mean_penalty_term,mean_horizon",
        f"{args.reward},{len(records)},{args.seed},"
        f"{result.mean_reward!r},{float(result.rewards.std())!r},"
        f"{result.mean_position_term!r},{result.mean_penalty_term!r},"
        f"{result.mean_horizon!r}",
    ]
    text = "\r\n".join(lines) + "\r\n"
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    rows = []
    for path in args.metrics:
        if not os.path.exists(path):
            raise ConfigError(f"metrics file not found: {path}")
        rows.extend(read_metrics(path))
    if not rows:
        raise ConfigError("no metrics rows in the given files")
    os.makedirs(args.out, exist_ok=True)
    written = []
    for reward_id in sorted({row["reward"] for row in rows}):
        fig = make_reward_figure(rows, reward_id, baseline=args.baseline)
        path = os.path.join(args.out, f"reward_{reward_id}.svg")
        save_reward_figure(fig, path)
        written.append(path)
    print("wrote " + ", ".join(written))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgym",
        description="Train and evaluate variable-horizon flow-matching "
                    "policies on the planar unicycle task suite.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-demos", help="generate a demonstration dataset")
    p_gen.add_argument("--config", required=True)
    p_gen.set_defaults(func=cmd_gen_demos)

    p_train = sub.add_parser("train", help="run training from a config file")
    p_train.add_argument("--config", required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="summarize a checkpoint on test tasks")
    p_eval.add_argument("--ckpt")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--reward", required=True)
    p_eval.add_argument("--n", type=int, required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--euler-steps", type=int, default=4)
    p_eval.add_argument("--out")
    p_eval.add_argument("--demo", action="store_true",
                        help="evaluate the scripted demonstrator instead "
                             "of a checkpoint")
    p_eval.set_defaults(func=cmd_eval)

    p_plot = sub.add_parser("plot", help="render reward-vs-budget figures")
    p_plot.add_argument("metrics", nargs="+")
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--baseline", type=float, default=None,
                        help="demonstrator mean reward to draw as a dotted line")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap()
        return args.func(args)
    except (ConfigError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
