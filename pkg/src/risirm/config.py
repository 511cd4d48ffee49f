"""Run configuration: defaults, file loading and validation.

A config file is YAML (JSON is accepted too).  Only ``environments`` is
required; every other section falls back to :data:`DEFAULTS`.  Schema::

    seed: int                      master seed for environments and mixing
    samples_per_environment: int
    scatterer_count: int           scatterers per environment
    rx_azimuth_deg: float | null   region-centre ray; null = class-tie ray
    propagation: {pattern_q, path_loss, nlos_normalization}
    link_budget: {transmit_power, bandwidth, noise_psd}
    environments:
      <name>: {distance: m, [scatterer_count], [rx_halfwidth], [seed]}
    train: {train_envs, test_env, n, alpha_e, alpha_c, epochs, batch_size,
            learning_rate, optimizer, lam, lam_warmup_epochs, penalty_mode,
            squared_penalty, hidden_dims, erm_features}
    sweep: {alpha_e, alpha_c, n_test, sizes}
    intervene: {env, train_envs, base_samples, base_azimuth_deg, n, scenarios}
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .channel import PropagationCfg
from .dataset import EnvironmentSpec, default_environments
from .optimizer import LinkBudget
from .training import TrainCfg


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 2021,
    "samples_per_environment": 1000,
    "scatterer_count": 3,
    "rx_azimuth_deg": None,
    "propagation": {"pattern_q": 0.285, "path_loss": "free-space", "nlos_normalization": "linear"},
    "link_budget": {"transmit_power": 1.0, "bandwidth": 20e6, "noise_psd": 10 ** (-20.4)},
    "environments": {"env1": {"distance": 2.0}, "env2": {"distance": 6.0}, "env3": {"distance": 4.0}},
    "train": {
        "train_envs": ["env1", "env2"],
        "test_env": "env3",
        "n": 600,
        "alpha_e": 0.5,
        "alpha_c": 0.5,
        "epochs": 300,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "optimizer": "adam",
        "lam": 10.0,
        "lam_warmup_epochs": 100,
        "penalty_mode": "per_sample",
        "squared_penalty": False,
        "hidden_dims": [16, 4],
        "erm_features": "x",
    },
    "sweep": {
        "alpha_e": [0.0, 0.25, 0.5, 0.75, 1.0],
        "alpha_c": [0.0, 0.25, 0.5, 0.75, 1.0],
        "n_test": 300,
        "sizes": [60, 300, 700],
    },
    "intervene": {
        "env": "env3",
        "train_envs": ["env1", "env2"],
        "base_samples": 1000,
        "base_azimuth_deg": [-60.0, 60.0],
        "n": 1000,
        "scenarios": None,
    },
}

_ENV_KEYS = {"distance", "scatterer_count", "rx_halfwidth", "seed"}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict) and key != "environments":
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(cfg: dict) -> dict:
    envs = cfg.get("environments")
    if not isinstance(envs, dict) or not envs:
        raise ConfigError("environments: expected a non-empty mapping")
    for name, e in envs.items():
        if not isinstance(e, dict):
            raise ConfigError(f"environments.{name}: expected a mapping")
        bad = set(e) - _ENV_KEYS
        if bad:
            raise ConfigError(f"environments.{name}.{sorted(bad)[0]}: unknown key")
        if "distance" not in e:
            raise ConfigError(f"environments.{name}.distance: required key missing")
        if not float(e["distance"]) > 0:
            raise ConfigError(f"environments.{name}.distance: must be positive")
    for section, key in (("train", "test_env"), ("intervene", "env")):
        if cfg[section][key] not in envs:
            raise ConfigError(f"{section}.{key}: unknown environment {cfg[section][key]!r}")
    for section in ("train", "intervene"):
        for e in cfg[section]["train_envs"]:
            if e not in envs:
                raise ConfigError(f"{section}.train_envs: unknown environment {e!r}")
    if cfg["train"]["erm_features"] not in ("x", "z"):
        raise ConfigError("train.erm_features: must be 'x' or 'z'")
    try:
        train_cfg(cfg)
        PropagationCfg(**cfg["propagation"])
        LinkBudget(**cfg["link_budget"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path=None, overrides: dict | None = None) -> dict:
    """Resolve a config file (or defaults) plus flag overrides."""
    user: dict = {}
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        if "environments" not in user:
            raise ConfigError("environments: required key missing")
    cfg = _merge(DEFAULTS, user, "")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return validate(cfg)


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


def environments(cfg: dict) -> dict[str, EnvironmentSpec]:
    prop = PropagationCfg(**cfg["propagation"])
    az = None if cfg["rx_azimuth_deg"] is None else math.radians(cfg["rx_azimuth_deg"])
    dists = {k: float(v["distance"]) for k, v in cfg["environments"].items()}
    envs = default_environments(cfg["seed"], dists, cfg["scatterer_count"], prop, az)
    out = {}
    for name, spec in envs.items():
        extra = cfg["environments"][name]
        fields = spec.__dict__.copy()
        fields.pop("frame", None), fields.pop("grid", None), fields.pop("scatterers", None)
        if "scatterer_count" in extra:
            fields["scatterer_count"] = int(extra["scatterer_count"])
        if "rx_halfwidth" in extra:
            fields["rx_region_halfwidth"] = float(extra["rx_halfwidth"])
        if "seed" in extra:
            fields["seed"] = int(extra["seed"])
        out[name] = EnvironmentSpec(**fields)
    return out


def budget(cfg: dict) -> LinkBudget:
    return LinkBudget(**cfg["link_budget"])


def train_cfg(cfg: dict, seed: int | None = None) -> TrainCfg:
    t = cfg["train"]
    return TrainCfg(
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        learning_rate=float(t["learning_rate"]),
        optimizer=t["optimizer"],
        lam=float(t["lam"]),
        lam_warmup_epochs=int(t["lam_warmup_epochs"]),
        penalty_mode=t["penalty_mode"],
        squared_penalty=bool(t["squared_penalty"]),
        seed=int(cfg["seed"] if seed is None else seed),
    )


def derived_seed(master: int, *tags: int) -> int:
    return int(np.random.SeedSequence([master, *tags]).generate_state(1)[0])
