"""End-to-end protocol shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as C
from .causal import compare_with_best, default_scenarios, generate_base_samples, load_scenarios
from .dataset import Dataset, MixSpec, balanced_subset, generate_environment, mix_training_set
from .evaluation import evaluate_methods, ood_sweep, sample_complexity_sweep
from .optimizer import default_codebook
from .predictor import MlpArch
from .training import train_erm, train_irm

log = logging.getLogger(__name__)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RIS_IRM_THREADS", "1")))
    except ValueError:
        return 1


def _gen(args):
    spec, count = args
    return generate_environment(spec, count)


def generate_all(cfg: dict) -> dict[str, Dataset]:
    envs = C.environments(cfg)
    n = int(cfg["samples_per_environment"])
    jobs = [(spec, n) for spec in envs.values()]
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_gen, jobs))
    else:
        results = [_gen(j) for j in jobs]
    return dict(zip(envs, results))


def training_mix(cfg: dict, data: dict, seed: int, n: int | None = None, alpha_e=None, alpha_c=None) -> Dataset:
    t = cfg["train"]
    e1, e2 = t["train_envs"][:2]
    mix = MixSpec(int(t["n"] if n is None else n),
                  float(t["alpha_e"] if alpha_e is None else alpha_e),
                  float(t["alpha_c"] if alpha_c is None else alpha_c),
                  C.derived_seed(seed, 1))
    return mix_training_set(data[e1], data[e2], mix)


def test_set(cfg: dict, data: dict, seed: int) -> Dataset:
    return balanced_subset(data[cfg["train"]["test_env"]], seed=C.derived_seed(seed, 2))


def tracked_sets(cfg: dict, data: dict, train: Dataset, seed: int) -> dict:
    """Held-out same-environment data plus the balanced test environment."""
    used = train.keys()
    out = {}
    for e in cfg["train"]["train_envs"]:
        rest = data[e].where(lambda s: (s.env_id, s.sample_index) not in used)
        if len(rest):
            out[e] = rest
    out[cfg["train"]["test_env"]] = test_set(cfg, data, seed)
    return out


def fit(method: str, train: Dataset, cfg: dict, seed: int, tracked: dict | None = None, **overrides):
    """Train ERM (pooled) or IRM (per environment) with the configured MLP."""
    tcfg = C.train_cfg(cfg, seed)
    if overrides:
        tcfg = type(tcfg)(**{**tcfg.__dict__, **overrides})
    K = len(train[0].h)
    codebook = default_codebook(K)
    hidden = tuple(cfg["train"]["hidden_dims"])
    if method == "erm":
        kind = cfg["train"]["erm_features"]
        feats = train.features(kind)
        arch = MlpArch(feats.shape[1], hidden, K, seed=seed)
        evals = {k: (d.features(kind), d.labels) for k, d in (tracked or {}).items()}
        params, report = train_erm(feats, train.phases, arch, tcfg, evals, codebook)
    elif method == "irm":
        kind = "z"
        arch = MlpArch(train[0].z.shape[0], hidden, K, seed=seed)
        per_env = [(d.Z, d.phases) for _, d in sorted(train.by_env().items())]
        evals = {k: (d.Z, d.labels) for k, d in (tracked or {}).items()}
        params, report = train_irm(per_env, arch, tcfg, evals, codebook)
    else:
        raise ValueError(f"unknown method {method!r}; expected 'erm' or 'irm'")
    params.meta["features"] = kind
    return params, report


def run_pair(cfg: dict, data: dict, seed: int, alpha_c=None, alpha_e=None, n=None, track: bool = False):
    """Train ERM and IRM on one mix; return (models, test rows)."""
    train = training_mix(cfg, data, seed, n=n, alpha_e=alpha_e, alpha_c=alpha_c)
    tracked = tracked_sets(cfg, data, train, seed) if track else None
    erm, _ = fit("erm", train, cfg, seed, tracked)
    irm, _ = fit("irm", train, cfg, seed, tracked)
    test = test_set(cfg, data, seed)
    codebook = default_codebook(len(train[0].h))
    rows = evaluate_methods(test, cfg["train"]["test_env"], {"ERM": erm, "IRM": irm}, codebook,
                            C.budget(cfg), seed=seed, alpha_e=alpha_e, alpha_c=alpha_c)
    return {"erm": erm, "irm": irm, "train": train}, rows


def evaluate(cfg: dict, data: dict, models: dict, seed: int):
    test = test_set(cfg, data, seed)
    codebook = default_codebook(len(test[0].h))
    t = cfg["train"]
    return evaluate_methods(test, t["test_env"], models, codebook, C.budget(cfg), seed=seed,
                            alpha_e=t["alpha_e"], alpha_c=t["alpha_c"])


def sweep_ood(cfg: dict, data: dict, models: dict, seed: int, exclude=None):
    t, s = cfg["train"], cfg["sweep"]
    e1, e2 = t["train_envs"][:2]
    if exclude is None:
        exclude = training_mix(cfg, data, seed).keys()
    codebook = default_codebook(len(data[e1][0].h))
    return ood_sweep(models["ERM"], models["IRM"], data[e1], data[e2], s["alpha_e"], s["alpha_c"], codebook,
                     C.budget(cfg), n_test=int(s["n_test"]), seed=C.derived_seed(seed, 3), exclude=exclude)


def sweep_samples(cfg: dict, data: dict, seed: int, sizes=None):
    t = cfg["train"]
    e1, e2 = t["train_envs"][:2]
    test = test_set(cfg, data, seed)
    codebook = default_codebook(len(test[0].h))

    def train_fn(train, method, s):
        return fit(method, train, cfg, s)[0]

    return sample_complexity_sweep(sizes or cfg["sweep"]["sizes"], data[e1], data[e2], test, codebook, train_fn,
                                   C.budget(cfg), seed=seed, test_id=t["test_env"])


def base_training_data(cfg: dict, seed: int) -> Dataset:
    """Observational data for the intervention study (azimuth uniform over a sector)."""
    iv = cfg["intervene"]
    envs = C.environments(cfg)
    parts = Dataset()
    for e in iv["train_envs"]:
        parts = parts + generate_base_samples(envs[e], int(iv["base_samples"]), tuple(iv["base_azimuth_deg"]),
                                              seed=seed)
    return parts


def intervention_scenarios(cfg: dict):
    iv = cfg["intervene"]
    if iv["scenarios"]:
        return load_scenarios(iv["scenarios"], int(iv["n"]))
    return default_scenarios(int(iv["n"]))


def intervene(cfg: dict, seed: int, irm=None):
    """(model, rows) with one row per scenario: predicted, simulated, deviation."""
    if irm is None:
        irm, _ = fit("irm", base_training_data(cfg, seed), cfg, seed)
    env = C.environments(cfg)[cfg["intervene"]["env"]]
    rows = []
    for spec in intervention_scenarios(cfg):
        p, q, dev = compare_with_best(irm, spec, env, budget=C.budget(cfg), seed=C.derived_seed(seed, 4))
        rows.append({"scenario": spec.name, "n": spec.base_n, "predicted": p, "simulated": q, "deviation": dev})
    return irm, rows


def mean_accuracy(rows, method: str) -> float:
    return float(np.mean([r.accuracy for r in rows if r.method == method]))
