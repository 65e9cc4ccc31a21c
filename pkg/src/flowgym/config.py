"""Flat key=value run configuration with sweep expansion.

One file configures one command.  Lines are ``key = value`` with ``#``
comments; a comma-separated value on a sweepable key turns the file into a
grid, expanded as the cartesian product over all list-valued keys, one run
per combination.
"""

from __future__ import annotations

import itertools
import os


class ConfigError(Exception):
    """Invalid configuration; the CLI maps this to exit code 2."""


# key -> (type constructor, sweepable)
GEN_DEMOS_SCHEMA = {
    "count": (int, False),
    "seed": (int, False),
    "out": (str, False),
    "dt": (float, False),
    "h_max": (int, False),
    "h_prime": (int, False),
}
GEN_DEMOS_REQUIRED = ("count", "seed", "out")

TRAIN_SCHEMA = {
    "method": (str, True),
    "dataset": (str, False),
    "out_dir": (str, False),
    "reward": (str, True),
    "alpha": (float, True),
    "explore_magnitude": (float, True),
    "seed": (int, True),
    "collections": (int, True),
    "gamma": (float, True),
    "batch_size": (int, True),
    "learning_rate": (float, True),
    "weight_decay": (float, True),
    "beta1": (float, False),
    "beta2": (float, False),
    "patience": (int, True),
    "plateau_threshold": (float, False),
    "euler_steps": (int, True),
    "velocity_width": (int, True),
    "cond_dim": (int, False),
    "kernel_size": (int, False),
    "group_size": (int, True),
    "surrogate_lr": (float, True),
    "surrogate_batch_size": (int, False),
    "surrogate_epochs": (int, True),
    "surrogate_width": (int, True),
    "bumps_per_channel": (int, False),
    "pretrain_cap": (int, False),
    "max_epochs_per_phase": (int, False),
    "stop_after_epochs": (int, False),
}
TRAIN_REQUIRED = ("method", "dataset", "out_dir", "reward", "seed")

METHOD_CHOICES = ("ilfm", "rwfm", "grpo")

#: keys that belong to the CLI layer, not the estimator constructor
_CLI_ONLY_KEYS = {"method", "dataset", "out_dir"}

#: estimator-relevant keys that only some methods accept
_METHOD_KEYS = {
    "ilfm": set(),
    "rwfm": {"alpha", "explore_magnitude", "bumps_per_channel", "collections",
             "gamma"},
    "grpo": {"alpha", "explore_magnitude", "bumps_per_channel", "collections",
             "gamma", "group_size", "surrogate_lr", "surrogate_batch_size",
             "surrogate_epochs", "surrogate_width", "pretrain_cap"},
}
_COMMON_KEYS = {"reward", "seed", "batch_size", "learning_rate", "weight_decay",
                "beta1", "beta2", "patience", "plateau_threshold",
                "euler_steps", "velocity_width", "cond_dim", "kernel_size",
                "max_epochs_per_phase", "stop_after_epochs"}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw parse: values stay strings; comma-separated values become lists."""
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if "," in value:
            raw[key] = [part.strip() for part in value.split(",")]
        else:
            raw[key] = value
    return raw


def read_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def _convert(key: str, text: str, schema: dict, source: str):
    ctor, _ = schema[key]
    try:
        return ctor(text)
    except ValueError as exc:
        raise ConfigError(f"{source}: bad value for {key!r}: {text!r} "
                          f"({exc})") from exc


def resolve_configs(raw: dict, schema: dict, required, source: str) -> list[dict]:
    """Validate keys/types and expand list-valued keys into a run grid."""
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{source}: unknown key {key!r}")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{source}: missing required key {key!r}")

    fixed = {}
    sweeps = {}
    for key, value in raw.items():
        ctor, sweepable = schema[key]
        if isinstance(value, list):
            if not sweepable:
                raise ConfigError(f"{source}: key {key!r} cannot be swept")
            sweeps[key] = [_convert(key, v, schema, source) for v in value]
        else:
            fixed[key] = _convert(key, value, schema, source)

    if not sweeps:
        return [fixed]
    keys = sorted(sweeps)
    grid = []
    for combo in itertools.product(*(sweeps[k] for k in keys)):
        cfg = dict(fixed)
        cfg.update(dict(zip(keys, combo)))
        grid.append(cfg)
    return grid


def load_gen_demos_config(path: str) -> dict:
    raw = read_config_file(path)
    configs = resolve_configs(raw, GEN_DEMOS_SCHEMA, GEN_DEMOS_REQUIRED, path)
    cfg = configs[0]
    if cfg["count"] < 3:
        raise ConfigError(f"{path}: count must be >= 3")
    return cfg


def load_train_configs(path: str) -> list[dict]:
    raw = read_config_file(path)
    configs = resolve_configs(raw, TRAIN_SCHEMA, TRAIN_REQUIRED, path)
    for cfg in configs:
        if cfg["method"] not in METHOD_CHOICES:
            raise ConfigError(f"{path}: method must be one of {METHOD_CHOICES}, "
                              f"got {cfg['method']!r}")
        allowed = _COMMON_KEYS | _METHOD_KEYS[cfg["method"]] | _CLI_ONLY_KEYS
        for key in cfg:
            if key not in allowed:
                raise ConfigError(
                    f"{path}: key {key!r} does not apply to method "
                    f"{cfg['method']!r}")
    ids = [run_id(cfg) for cfg in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{path}: sweep produces duplicate run ids; "
                          f"vary alpha/explore_magnitude/seed/method per run")
    return configs


_ID_KEYS = ("alpha", "explore_magnitude", "group_size", "collections",
            "patience", "velocity_width")
_ID_TOKENS = {"alpha": "a", "explore_magnitude": "m", "group_size": "g",
              "collections": "c", "patience": "p", "velocity_width": "w"}


def run_id(cfg: dict) -> str:
    """Readable unique id: method, reward, the distinguishing knobs, seed."""
    parts = [cfg["method"], cfg["reward"]]
    for key in _ID_KEYS:
        if key in cfg:
            parts.append(f"{_ID_TOKENS[key]}{cfg[key]:g}")
    parts.append(f"s{cfg['seed']}")
    return "-".join(parts)


def estimator_kwargs(cfg: dict) -> dict:
    """The config keys that feed the estimator constructor."""
    return {k: v for k, v in cfg.items() if k not in _CLI_ONLY_KEYS}
