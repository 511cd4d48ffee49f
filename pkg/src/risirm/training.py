"""ERM and IRM trainers for the phase predictor.

The IRM objective adds ``lam * ||grad_w loss||_2`` either per sample (the
penalty sits inside the per-sample sum) or once per environment on the
environment's mean risk.  Per-sample gradients are obtained in one reverse
sweep by giving every sample in the batch a private broadcast copy of the
weights; the penalty is then differentiated a second time through the
recorded gradient graph.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import fit_standardization
from .optimizer import PhaseCodebook
from .predictor import (
    LossCfg,
    MlpArch,
    MlpParams,
    apply_layers,
    forward,
    init,
    loss_tensor,
    snap_to_class,
    unpack,
)

log = logging.getLogger(__name__)

PENALTY_MODES = ("per_sample", "per_environment")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainCfg:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    lam: float = 10.0
    lam_warmup_epochs: int = 100
    penalty_mode: str = "per_sample"
    squared_penalty: bool = False
    seed: int = 0
    loss_scale: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lam_at(self, epoch: int) -> float:
        return 0.0 if epoch < self.lam_warmup_epochs else self.lam


@dataclass
class TrainReport:
    method: str
    cfg: dict
    loss: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    accuracy: dict = field(default_factory=dict)

    def record(self, loss: float, penalty: float, acc: dict):
        self.loss.append(loss)
        self.penalty.append(penalty)
        for name, value in acc.items():
            self.accuracy.setdefault(name, []).append(value)

    def rows(self):
        names = sorted(self.accuracy)
        for e in range(len(self.loss)):
            row = {"epoch": e + 1, "loss": self.loss[e], "penalty": self.penalty[e]}
            row.update({f"acc_{n}": self.accuracy[n][e] for n in names})
            yield row

    def to_csv(self, path) -> None:
        names = sorted(self.accuracy)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "loss", "penalty"] + [f"acc_{n}" for n in names])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, w: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(w)
            self.v = np.zeros_like(w)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return w - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, w, g):
        return w - self.lr * g


def _optimizer(cfg: TrainCfg):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(cfg.learning_rate)


# ------------------------------------------------------------------ objectives


def mean_loss(arch: MlpArch, w: ad.Tensor, x_std, targets, loss_cfg: LossCfg) -> ad.Tensor:
    return loss_tensor(targets, apply_layers(unpack(arch, w), x_std), loss_cfg).mean()


def per_sample_terms(arch: MlpArch, w: ad.Tensor, x_std, targets, loss_cfg: LossCfg,
                     create_graph: bool = True):
    """Per-sample losses (n,) and squared per-sample gradient norms (n,)."""
    n = len(x_std)
    copies = []
    for W, b in unpack(arch, w):
        copies.append(ad.broadcast_to(ad.reshape(W, (1,) + W.shape), (n,) + W.shape))
        copies.append(ad.broadcast_to(ad.reshape(b, (1,) + b.shape), (n,) + b.shape))
    layers = list(zip(copies[0::2], copies[1::2]))
    ell = loss_tensor(targets, apply_layers(layers, x_std), loss_cfg)
    grads = ad.grad(ell.sum(), copies, create_graph=create_graph)
    sq = None
    for g in grads:
        axes = tuple(range(1, g.value.ndim))
        term = (g * g).sum(axis=axes)
        sq = term if sq is None else sq + term
    return ell, sq


def _penalty(sq: ad.Tensor, squared: bool) -> ad.Tensor:
    return sq if squared else ad.guarded_sqrt(sq)


def irm_step_objective(arch: MlpArch, w: ad.Tensor, env_batches, lam: float, cfg: TrainCfg,
                       loss_cfg: LossCfg) -> ad.Tensor:
    """Mean over environments of (mean loss + lam * penalty)."""
    terms = []
    for x, t in env_batches:
        if lam == 0.0:
            terms.append(mean_loss(arch, w, x, t, loss_cfg))
        elif cfg.penalty_mode == "per_sample":
            ell, sq = per_sample_terms(arch, w, x, t, loss_cfg)
            terms.append((ell + _penalty(sq, cfg.squared_penalty) * lam).mean())
        else:
            risk = mean_loss(arch, w, x, t, loss_cfg)
            (gr,) = ad.grad(risk, [w], create_graph=True)
            terms.append(risk + _penalty((gr * gr).sum(), cfg.squared_penalty) * lam)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total if len(terms) == 1 else total * (1.0 / len(terms))


def irm_sample_objective(params: MlpParams, sample_input, target, lam: float,
                         loss_cfg: LossCfg = LossCfg()) -> float:
    """F = loss + lam * ||grad_w loss||_2 for a single sample."""
    x = params.standardize(np.atleast_2d(sample_input))
    t = np.atleast_2d(getattr(target, "phases", target))
    wt = ad.Tensor(params.w, requires_grad=True)
    ell, sq = per_sample_terms(params.arch, wt, x, t, loss_cfg, create_graph=False)
    return float(ell.value[0] + lam * math.sqrt(sq.value[0]))


def eq9_radical(params: MlpParams, sample_input, target, lam: float,
                loss_cfg: LossCfg = LossCfg()) -> float:
    """Penalty assembled term by term from the output Jacobian.

    (lam * l0 / 2) * sqrt(sum_i (sum_k sin(f_k - phi_k) * d f_k / d w_i)^2),
    with the Jacobian rows obtained from one reverse sweep seeded by the
    identity over K replicated copies of the input.
    """
    arch = params.arch
    K = arch.output_dim
    x = np.repeat(params.standardize(np.atleast_2d(sample_input)), K, axis=0)
    phi = np.asarray(getattr(target, "phases", target), dtype=float)
    wt = ad.Tensor(params.w, requires_grad=True)
    copies = []
    for W, b in unpack(arch, wt):
        copies.append(ad.broadcast_to(ad.reshape(W, (1,) + W.shape), (K,) + W.shape))
        copies.append(ad.broadcast_to(ad.reshape(b, (1,) + b.shape), (K,) + b.shape))
    pred = apply_layers(list(zip(copies[0::2], copies[1::2])), x)
    rows = ad.grad(pred, copies, seed=np.eye(K))
    jac = np.concatenate([g.value.reshape(K, -1) for g in rows], axis=1)  # (K, P)
    s = np.sin(pred.value[0] - phi)
    inner = s @ jac
    return lam * loss_cfg.scale / 2.0 * math.sqrt(float(inner @ inner))


# -------------------------------------------------------------------- loops


def _batches(rng: np.random.Generator, n: int, size: int):
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def _accuracy(params: MlpParams, eval_sets, codebook) -> dict:
    out = {}
    for name, (inputs, labels) in (eval_sets or {}).items():
        pred = snap_to_class(forward(params, inputs), codebook)
        out[name] = float(np.mean(pred == labels))
    return out


def _mean_penalty(arch, w, env_arrays, cfg: TrainCfg, loss_cfg) -> float:
    """Diagnostic penalty (without lam) over the full training data."""
    vals = []
    wt = ad.Tensor(w, requires_grad=True)
    for x, t in env_arrays:
        if cfg.penalty_mode == "per_sample":
            _, sq = per_sample_terms(arch, wt, x, t, loss_cfg, create_graph=False)
            vals.append(float(np.mean(np.sqrt(sq.value))))
        else:
            (gr,) = ad.grad(mean_loss(arch, wt, x, t, loss_cfg), [wt])
            vals.append(float(np.linalg.norm(gr.value)))
    return float(np.mean(vals))


def train_irm(env_data, arch: MlpArch, cfg: TrainCfg = TrainCfg(), eval_sets=None,
              codebook: PhaseCodebook | None = None, method: str = "irm"):
    """Train on per-environment ``(inputs, target_phases)`` pairs.

    Each step draws one mini-batch per environment; environments with fewer
    batches per epoch are cycled.  The penalty weight is zero during the
    warm-up epochs.
    """
    env_data = [(np.asarray(x, dtype=float), np.asarray(t, dtype=float)) for x, t in env_data]
    if not env_data or any(len(x) == 0 for x, _ in env_data):
        raise ValueError("every environment needs at least one sample")
    if codebook is None and eval_sets:
        raise ValueError("eval_sets require a codebook")
    mean, std = fit_standardization(np.concatenate([x for x, _ in env_data]))
    params = init(arch, mean, std)
    env_std = [(params.standardize(x), t) for x, t in env_data]
    loss_cfg = LossCfg(cfg.loss_scale)
    rng = np.random.default_rng(cfg.seed)
    opt = _optimizer(cfg)
    w = params.w.copy()
    report = TrainReport(method, asdict(cfg))
    for epoch in range(cfg.epochs):
        lam = cfg.lam_at(epoch)
        per_env = [_batches(rng, len(x), cfg.batch_size) for x, _ in env_std]
        steps = max(len(b) for b in per_env)
        losses = []
        for j in range(steps):
            batch = [(x[b[j % len(b)]], t[b[j % len(b)]]) for (x, t), b in zip(env_std, per_env)]
            obj = lambda wt: irm_step_objective(arch, wt, batch, lam, cfg, loss_cfg)  # noqa: E731
            try:
                value, g = ad.value_and_gradient(obj, w)
            except ad.DifferentiationError as exc:
                raise TrainingError(f"non-finite objective at epoch {epoch + 1}, batch {j + 1}: {exc}") from exc
            w = opt.step(w, g)
            losses.append(value)
        params = params.with_weights(w)
        report.record(float(np.mean(losses)), _mean_penalty(arch, w, env_std, cfg, loss_cfg),
                      _accuracy(params, eval_sets, codebook))
        if (epoch + 1) % 50 == 0:
            log.debug("%s epoch %d loss %.4g penalty %.4g", method, epoch + 1, report.loss[-1], report.penalty[-1])
    params.meta = {"method": method, "train_cfg": asdict(cfg)}
    return params, report


def train_erm(inputs, targets, arch: MlpArch, cfg: TrainCfg = TrainCfg(), eval_sets=None,
              codebook: PhaseCodebook | None = None):
    """Mini-batch descent on the pooled mean phase loss (no penalty)."""
    plain = TrainCfg(**{**asdict(cfg), "lam": 0.0})
    return train_irm([(inputs, targets)], arch, plain, eval_sets, codebook, method="erm")
