"""MLP phase predictors, the periodic phase loss and class snapping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .optimizer import PhaseCodebook


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden_dims: tuple = (16, 4)
    output_dim: int = 100
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ValueError("all layer sizes must be >= 1")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_sizes)

    def offsets(self):
        """(weight_start, bias_start, fan_in, fan_out) per layer in the flat vector."""
        pos = 0
        out = []
        for fan_in, fan_out in self.layer_sizes:
            out.append((pos, pos + fan_in * fan_out, fan_in, fan_out))
            pos += (fan_in + 1) * fan_out
        return out


@dataclass
class MlpParams:
    w: np.ndarray
    arch: MlpArch
    mean: np.ndarray = None
    std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.arch.n_params,):
            raise ValueError(f"expected {self.arch.n_params} parameters, got {self.w.shape}")
        d = self.arch.input_dim
        self.mean = np.zeros(d) if self.mean is None else np.asarray(self.mean, dtype=float)
        self.std = np.ones(d) if self.std is None else np.asarray(self.std, dtype=float)
        if self.mean.shape != (d,) or self.std.shape != (d,) or np.any(self.std <= 0):
            raise ValueError("standardisation vectors must match input_dim with std > 0")

    def standardize(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=float)
        if x.shape[-1] != self.arch.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.arch.input_dim}")
        return (x - self.mean) / self.std

    def with_weights(self, w) -> "MlpParams":
        return MlpParams(np.array(w, dtype=float), self.arch, self.mean, self.std, dict(self.meta))


@dataclass(frozen=True)
class LossCfg:
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("loss scale must be positive")


def init(arch: MlpArch, mean=None, std=None) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic in ``arch.seed``."""
    rng = np.random.default_rng(arch.seed)
    w = np.zeros(arch.n_params)
    for ws, bs, fan_in, fan_out in arch.offsets():
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        w[ws:bs] = rng.uniform(-lim, lim, size=fan_in * fan_out)
    return MlpParams(w, arch, mean, std)


def forward(params: MlpParams, inputs) -> np.ndarray:
    """Predicted phases (unbounded; read modulo 2*pi)."""
    a = params.standardize(inputs)
    n_layers = len(params.arch.layer_sizes)
    for i, (ws, bs, fan_in, fan_out) in enumerate(params.arch.offsets()):
        W = params.w[ws:bs].reshape(fan_out, fan_in)
        a = a @ W.T + params.w[bs:bs + fan_out]
        if i < n_layers - 1:
            a = np.tanh(a)
    return a


def unpack(arch: MlpArch, w: ad.Tensor):
    layers = []
    for ws, bs, fan_in, fan_out in arch.offsets():
        W = ad.reshape(ad.slice1d(w, ws, bs), (fan_out, fan_in))
        b = ad.slice1d(w, bs, bs + fan_out)
        layers.append((W, b))
    return layers


def apply_layers(layers, x: np.ndarray) -> ad.Tensor:
    """Differentiable forward over standardised inputs ``x`` (n, d).

    Weights of shape (n, out, in) are treated as one private copy per sample.
    """
    a = ad.Tensor(x)
    for i, (W, b) in enumerate(layers):
        if W.value.ndim == 3:
            a = ad.einsum("noi,ni->no", W, a) + b
        else:
            a = ad.einsum("oi,ni->no", W, a) + b
        if i < len(layers) - 1:
            a = ad.tanh(a)
    return a


def forward_tensor(arch: MlpArch, w: ad.Tensor, x_std: np.ndarray) -> ad.Tensor:
    return apply_layers(unpack(arch, w), x_std)


def loss(target, predicted, cfg: LossCfg = LossCfg()):
    """Sum over elements of scale * sin^2((predicted - target) / 2).

    Accepts batches; the reduction runs over the last axis.
    """
    t = np.asarray(getattr(target, "phases", target), dtype=float)
    p = np.asarray(predicted, dtype=float)
    if t.shape[-1] != p.shape[-1]:
        raise ValueError(f"length mismatch: {t.shape[-1]} vs {p.shape[-1]}")
    return cfg.scale * np.sum(np.sin((p - t) / 2.0) ** 2, axis=-1)


def loss_tensor(target: np.ndarray, predicted: ad.Tensor, cfg: LossCfg = LossCfg()) -> ad.Tensor:
    """Per-sample loss as a Tensor of shape (n,)."""
    s = ad.sin((predicted - target) * 0.5)
    return (s * s).sum(axis=-1) * cfg.scale


def snap_to_class(predicted, codebook: PhaseCodebook, cfg: LossCfg = LossCfg()):
    """Nearest codebook class under the phase loss; ties go to the lowest id.

    ``predicted`` may be one vector (returns an int) or a batch (returns an
    int array).
    """
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    p = np.asarray(predicted, dtype=float)
    table = codebook.phase_matrix()
    d = loss(table[None, :, :], p.reshape(-1, 1, p.shape[-1]), cfg)
    ids = np.argmin(d, axis=1) + 1
    return int(ids[0]) if p.ndim == 1 else ids


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(params: MlpParams, path, codebook_id: str = "default") -> None:
    a = params.arch
    doc = {
        "arch": {
            "input_dim": a.input_dim,
            "hidden_dims": list(a.hidden_dims),
            "output_dim": a.output_dim,
            "activation": a.activation,
        },
        "seed": a.seed,
        "codebook": codebook_id,
        "mean": params.mean.tolist(),
        "std": params.std.tolist(),
        "weights": params.w.tolist(),
        "meta": params.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> MlpParams:
    doc = json.loads(Path(path).read_text())
    arch = MlpArch(seed=doc["seed"], **doc["arch"])
    return MlpParams(np.array(doc["weights"]), arch, np.array(doc["mean"]), np.array(doc["std"]),
                     doc.get("meta", {}))
