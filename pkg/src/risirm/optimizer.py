"""Phase configurations, link SNR/rate and exhaustive-search labelling."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2 * math.pi
MAX_ENUMERATION_K = 20


@dataclass(frozen=True)
class PhaseConfig:
    phases: np.ndarray

    def __post_init__(self):
        p = np.mod(np.asarray(self.phases, dtype=float), TWO_PI)
        # np.mod can round tiny negatives up to exactly 2*pi
        p[p >= TWO_PI] = 0.0
        p.setflags(write=False)
        object.__setattr__(self, "phases", p)

    def __len__(self):
        return len(self.phases)

    def reflection(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def __eq__(self, other):
        return isinstance(other, PhaseConfig) and np.array_equal(self.phases, other.phases)

    def __hash__(self):
        return hash(self.phases.tobytes())


@dataclass(frozen=True)
class PhaseCodebook:
    """Ordered feasible set; entry i carries class id i + 1."""

    entries: tuple

    def __post_init__(self):
        if len({e.phases.tobytes() for e in self.entries}) != len(self.entries):
            raise ValueError("codebook entries must be distinct")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> PhaseConfig:
        return self.entries[i]

    @property
    def class_ids(self) -> list[int]:
        return list(range(1, len(self.entries) + 1))

    def config_for(self, class_id: int) -> PhaseConfig:
        return self.entries[class_id - 1]

    def phase_matrix(self) -> np.ndarray:
        return np.stack([e.phases for e in self.entries])


def default_codebook(K: int) -> PhaseCodebook:
    """CLASS#1 all-zero and CLASS#2 alternating (0, pi, 0, pi, ...)."""
    alt = np.where(np.arange(K) % 2 == 1, math.pi, 0.0)
    if K == 1:
        return PhaseCodebook((PhaseConfig(np.zeros(1)), PhaseConfig(np.array([math.pi]))))
    return PhaseCodebook((PhaseConfig(np.zeros(K)), PhaseConfig(alt)))


def binary_codebook(K: int) -> PhaseCodebook:
    """All 2**K configurations with phases in {0, pi}, default classes first."""
    if K > MAX_ENUMERATION_K:
        raise ValueError(f"enumeration too large: 2**{K} configurations")
    base = default_codebook(K)
    seen = {e.phases.tobytes() for e in base.entries}
    entries = list(base.entries)
    for bits in itertools.product((0.0, math.pi), repeat=K):
        c = PhaseConfig(np.array(bits))
        if c.phases.tobytes() not in seen:
            seen.add(c.phases.tobytes())
            entries.append(c)
    return PhaseCodebook(tuple(entries))


@dataclass(frozen=True)
class LinkBudget:
    transmit_power: float = 1.0
    bandwidth: float = 20e6
    noise_psd: float = 10 ** (-20.4)

    def __post_init__(self):
        if min(self.transmit_power, self.bandwidth, self.noise_psd) <= 0:
            raise ValueError("link budget terms must be strictly positive")

    @property
    def scale(self) -> float:
        return self.transmit_power / (self.bandwidth * self.noise_psd)


def _check(h, g, n=None):
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if h.shape != g.shape or (n is not None and h.shape[-1] != n):
        raise ValueError(f"length mismatch: h{h.shape}, g{g.shape}" + ("" if n is None else f", config {n}"))
    return h, g


def snr(config: PhaseConfig, h, g, budget: LinkBudget = LinkBudget()) -> float:
    h, g = _check(h, g, len(config))
    s = np.sum(np.conj(g) * config.reflection() * h)
    return float(abs(s) ** 2 * budget.scale)


def snr_batch(phases: np.ndarray, h, g, budget: LinkBudget = LinkBudget()) -> np.ndarray:
    """SNR for a stack of phase rows (M, K) against one (h, g) pair."""
    h, g = _check(h, g)
    combo = np.conj(g) * h
    s = np.exp(1j * np.asarray(phases, dtype=float)) @ combo
    return np.abs(s) ** 2 * budget.scale


def rate(config: PhaseConfig, h, g, budget: LinkBudget = LinkBudget()) -> float:
    return budget.bandwidth * math.log2(1.0 + snr(config, h, g, budget))


def best_config(codebook: PhaseCodebook, h, g, budget: LinkBudget = LinkBudget()):
    """Return ``(class_id, config, snr)`` maximising SNR; ties go to the lowest id."""
    if len(codebook) == 0:
        raise ValueError("empty codebook")
    best = None
    for cid, cfg in zip(codebook.class_ids, codebook.entries):
        value = snr(cfg, h, g, budget)
        if best is None or value > best[2]:
            best = (cid, cfg, value)
    return best


def brute_force_binary(h, g, budget: LinkBudget = LinkBudget()):
    """Exact maximiser over all {0, pi}^K configurations.

    The full set is screened in vectorised chunks; every candidate within a
    relative 1e-9 of the screened maximum is then rescored with :func:`snr`
    so the reported value is bit-identical to a per-configuration search.
    """
    h, g = _check(h, g)
    K = h.shape[-1]
    if K > MAX_ENUMERATION_K:
        raise ValueError(f"enumeration too large: 2**{K} configurations")
    combo = np.conj(g) * h
    weights = 1 << np.arange(K)
    total = 1 << K
    chunk = 1 << min(K, 14)
    scores = np.empty(total)
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total))
        signs = np.where((codes[:, None] & weights) != 0, -1.0, 1.0)
        scores[start:start + len(codes)] = np.abs(signs @ combo) ** 2
    top = scores.max()
    candidates = np.flatnonzero(scores >= top * (1 - 1e-9))
    best = None
    for code in candidates:
        cfg = PhaseConfig(np.where((code & weights) != 0, math.pi, 0.0))
        value = snr(cfg, h, g, budget)
        if best is None or value > best[1]:
            best = (cfg, value)
    return best


def continuous_optimum_snr(h, g, budget: LinkBudget = LinkBudget()) -> float:
    """Upper bound on :func:`snr` over all phase configurations.

    The co-phased sum attains the bound analytically, so it is rounded
    outward by the worst-case summation error of a K-term complex sum;
    otherwise a configuration meeting it could exceed it by an ulp.
    """
    h, g = _check(h, g)
    K = h.shape[-1]
    exact = np.sum(np.abs(g) * np.abs(h)) ** 2 * budget.scale
    return float(exact * (1.0 + (2 * K + 8) * np.finfo(float).eps))


def matched_phases(h, g) -> PhaseConfig:
    """Per-element phases that co-phase every term of the received sum."""
    h, g = _check(h, g)
    return PhaseConfig(-np.angle(np.conj(g) * h))
