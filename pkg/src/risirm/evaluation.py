"""Accuracy, spectral efficiency and SNR-loss metrics plus sweep harnesses."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .dataset import Dataset, MixSpec, mix_training_set
from .optimizer import LinkBudget, PhaseCodebook, snr
from .predictor import MlpParams, forward, snap_to_class

METHODS = ("BEST", "IRM", "ERM", "RAND")


@dataclass
class MetricRow:
    method: str
    dataset: str
    alpha_e: float | None
    alpha_c: float | None
    n: int
    accuracy: float
    se_mean: float
    snr_loss_mean: float
    snr_loss_std: float
    train_size: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


CSV_FIELDS = [f.name for f in fields(MetricRow)]


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError("predictions and labels differ in length")
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(p == y))


def method_snr(class_ids, data: Dataset, codebook: PhaseCodebook, budget: LinkBudget = LinkBudget()) -> np.ndarray:
    return np.array([snr(codebook.config_for(int(c)), s.h, s.g, budget) for c, s in zip(class_ids, data)])


def spectral_efficiency(class_ids, data: Dataset, codebook: PhaseCodebook,
                        budget: LinkBudget = LinkBudget()) -> np.ndarray:
    """log2(1 + SNR) per sample for the given per-sample codebook choices."""
    return np.log2(1.0 + method_snr(class_ids, data, codebook, budget))


def snr_loss(method_snrs, best_snrs) -> tuple[float, float]:
    m = np.asarray(method_snrs, dtype=float)
    b = np.asarray(best_snrs, dtype=float)
    if np.any(b <= 0):
        raise ValueError("SNR loss needs a strictly positive BEST SNR for every sample")
    ratio = 1.0 - m / b
    return float(ratio.mean()), float(ratio.std())


def predict_classes(params: MlpParams, data: Dataset, codebook: PhaseCodebook) -> np.ndarray:
    kind = params.meta.get("features", "z" if params.arch.input_dim == 10 else "x")
    return snap_to_class(forward(params, data.features(kind)), codebook)


def method_classes(method: str, data: Dataset, codebook: PhaseCodebook, models: dict, seed: int = 0) -> np.ndarray:
    if method == "BEST":
        return data.labels
    if method == "RAND":
        rng = np.random.default_rng(seed)
        return rng.integers(1, len(codebook) + 1, size=len(data))
    return predict_classes(models[method], data, codebook)


def evaluate_methods(data: Dataset, dataset_id: str, models: dict, codebook: PhaseCodebook,
                     budget: LinkBudget = LinkBudget(), seed: int = 0, alpha_e=None, alpha_c=None,
                     methods=METHODS, train_size=None) -> list[MetricRow]:
    """One MetricRow per method; predictor methods use snapped codebook classes."""
    best = np.array([s.best_snr for s in data])
    rows = []
    for m in methods:
        ids = method_classes(m, data, codebook, models, seed)
        snrs = best if m == "BEST" else method_snr(ids, data, codebook, budget)
        loss_mean, loss_std = snr_loss(snrs, best)
        rows.append(MetricRow(m, dataset_id, alpha_e, alpha_c, len(data), accuracy(ids, data.labels),
                              float(np.mean(np.log2(1.0 + snrs))), loss_mean, loss_std, train_size))
    return rows


def ood_sweep(model_erm: MlpParams, model_irm: MlpParams, d1: Dataset, d2: Dataset,
              alpha_e_grid, alpha_c_grid, codebook: PhaseCodebook, budget: LinkBudget = LinkBudget(),
              n_test: int = 300, seed: int = 1, exclude=None) -> list[MetricRow]:
    """Evaluate all methods on re-mixed Env1/Env2 test sets.

    Test mixes never reuse samples in ``exclude`` (the training keys), and
    each grid point uses its own mixing seed derived from ``seed``.
    """
    models = {"ERM": model_erm, "IRM": model_irm}
    rows = []
    for i, ae in enumerate(alpha_e_grid):
        for j, ac in enumerate(alpha_c_grid):
            mix_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1)[0])
            test = mix_training_set(d1, d2, MixSpec(n_test, ae, ac, mix_seed), exclude=exclude)
            rows.extend(evaluate_methods(test, "ood", models, codebook, budget, seed=mix_seed,
                                         alpha_e=ae, alpha_c=ac))
    return rows


def sample_complexity_sweep(sizes, d1: Dataset, d2: Dataset, test: Dataset, codebook: PhaseCodebook,
                            train_fn, budget: LinkBudget = LinkBudget(), seed: int = 0,
                            test_id: str = "env3") -> list[MetricRow]:
    """Train fresh ERM/IRM models per size on balanced mixes and score ``test``.

    ``train_fn(train_set, method, seed)`` returns fitted MlpParams.
    """
    rows = []
    for size in sizes:
        train = mix_training_set(d1, d2, MixSpec(size, 0.5, 0.5, seed))
        models = {"ERM": train_fn(train, "erm", seed), "IRM": train_fn(train, "irm", seed)}
        rows.extend(evaluate_methods(test, test_id, models, codebook, budget, seed=seed,
                                     alpha_e=0.5, alpha_c=0.5, train_size=size))
    return rows


def se_gap(rows, method: str, train_size=None) -> float:
    """Relative spectral-efficiency shortfall of ``method`` against BEST."""
    pick = [r for r in rows if train_size is None or r.train_size == train_size]
    best = next(r.se_mean for r in pick if r.method == "BEST")
    m = next(r.se_mean for r in pick if r.method == method)
    return 1.0 - m / best


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return v


def write_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in asdict(r).items()})


def read_rows(path) -> list[MetricRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            def num(key, cast=float):
                return cast(rec[key]) if rec.get(key, "") != "" else None
            out.append(MetricRow(rec["method"], rec["dataset"], num("alpha_e"), num("alpha_c"), int(rec["n"]),
                                 float(rec["accuracy"]), float(rec["se_mean"]), float(rec["snr_loss_mean"]),
                                 float(rec["snr_loss_std"]), num("train_size", int)))
    return out
