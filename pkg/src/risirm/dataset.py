"""Environments, channel samples, the geometric representation and mixing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .channel import (
    ChannelDraw,
    PropagationCfg,
    RisGrid,
    composite_tx_ris,
    place_scatterers,
    ris_rx_channel,
    tx_ris_los_channel,
    tx_ris_nlos_channel,
)
from .geometry import GeometryError, LocalFrame, Point3, spherical_from_point
from .optimizer import LinkBudget, PhaseCodebook, best_config, default_codebook, snr

Z_DIM = 10
Z_NAMES = (
    "tx_aod_az", "tx_aod_el", "ris_aoa_az", "ris_aoa_el", "d_tx_ris",
    "ris_aod_az", "ris_aod_el", "rx_aoa_az", "rx_aoa_el", "d_ris_rx",
)


@dataclass(frozen=True)
class EnvironmentSpec:
    """One data-generating environment.

    The RX is uniform over an axis-aligned square of half-width
    ``rx_region_halfwidth`` at the height of ``rx_region_center``.
    """

    id: str
    tx_position: Point3
    rx_region_center: Point3
    seed: int
    ris_position: Point3 = Point3(10.0, 30.0, 1.0)
    ris_boresight: tuple = (0.0, 1.0, 0.0)
    ris_rows: int = 10
    ris_cols: int = 10
    carrier_frequency: float = 28e9
    rx_region_halfwidth: float = 1.0
    scatterer_count: int = 10
    scatterer_region_radius: float = 5.0
    propagation: PropagationCfg = PropagationCfg()

    def __post_init__(self):
        if self.scatterer_count < 0:
            raise ValueError("scatterer_count must be >= 0")
        if self.rx_region_halfwidth <= 0:
            raise ValueError("rx_region_halfwidth must be positive")
        c, r, hw = self.rx_region_center, self.ris_position, self.rx_region_halfwidth
        if abs(c.x - r.x) <= hw and abs(c.y - r.y) <= hw and c.z == r.z:
            raise GeometryError(f"{self.id}: RX region contains the RIS origin")

    @cached_property
    def frame(self) -> LocalFrame:
        return LocalFrame.facing(self.ris_position, self.ris_boresight)

    @cached_property
    def grid(self) -> RisGrid:
        return RisGrid.half_wavelength(self.ris_rows, self.ris_cols, self.frame, self.carrier_frequency)

    @cached_property
    def scatterers(self):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x5CA7]))
        return place_scatterers(rng, self.scatterer_count, self.tx_position, self.frame,
                                radius=self.scatterer_region_radius)

    @property
    def K(self) -> int:
        return self.ris_rows * self.ris_cols

    def terminal_frame(self, at: Point3) -> LocalFrame:
        """Frame for a TX/RX: facing the RIS wall, i.e. opposite the RIS boresight."""
        return LocalFrame.facing(at, tuple(-np.asarray(self.ris_boresight, dtype=float)))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tx_position": [self.tx_position.x, self.tx_position.y, self.tx_position.z],
            "rx_region_center": [self.rx_region_center.x, self.rx_region_center.y, self.rx_region_center.z],
            "seed": int(self.seed),
            "ris_position": [self.ris_position.x, self.ris_position.y, self.ris_position.z],
            "ris_boresight": list(self.ris_boresight),
            "ris_rows": self.ris_rows,
            "ris_cols": self.ris_cols,
            "carrier_frequency": self.carrier_frequency,
            "rx_region_halfwidth": self.rx_region_halfwidth,
            "scatterer_count": self.scatterer_count,
            "scatterer_region_radius": self.scatterer_region_radius,
            "propagation": {
                "pattern_q": self.propagation.pattern_q,
                "path_loss": self.propagation.path_loss,
                "nlos_normalization": self.propagation.nlos_normalization,
            },
        }


def class_tie_azimuth(tx: Point3, ris: Point3 = Point3(10.0, 30.0, 1.0),
                      boresight=(0.0, 1.0, 0.0), spacing_wavelengths: float = 0.5) -> float:
    """RX azimuth at which the all-zero and alternating patterns tie under LOS.

    The alternating pattern adds a pi phase step per column, so the two
    patterns tie when the per-column phase step of conj(g) * h is an odd
    multiple of pi/2.  The root closest to boresight is returned.
    """
    frame = LocalFrame.facing(ris, boresight)
    tx_r = spherical_from_point(frame, tx)
    u_tx = math.cos(tx_r.elevation) * math.sin(tx_r.azimuth)
    step = 1.0 / (4.0 * spacing_wavelengths)
    roots = [u_tx + k * step for k in range(-7, 8, 2) if abs(u_tx + k * step) <= 1.0]
    if not roots:
        raise GeometryError("no tie direction inside the front half-space")
    return math.asin(min(roots, key=abs))


def default_environments(master_seed: int = 2021, distances=None, scatterer_count: int = 3,
                         propagation: PropagationCfg = PropagationCfg(), rx_azimuth: float | None = None):
    """Env1/Env2/Env3 at 2 m, 6 m and 4 m from the RIS.

    Region centres sit on the class-tie ray so each environment yields
    both labels; pass ``rx_azimuth`` (radians) to override.
    """
    distances = distances or {"env1": 2.0, "env2": 6.0, "env3": 4.0}
    tx = Point3(0.0, 35.0, 1.0)
    ris = Point3(10.0, 30.0, 1.0)
    az = class_tie_azimuth(tx, ris) if rx_azimuth is None else rx_azimuth
    envs = {}
    for i, (name, d) in enumerate(distances.items()):
        centre = Point3(ris.x + d * math.sin(az), ris.y + d * math.cos(az), ris.z)
        seed = int(np.random.SeedSequence([master_seed, i]).generate_state(1, np.uint64)[0])
        envs[name] = EnvironmentSpec(name, tx, centre, seed, ris_position=ris,
                                     scatterer_count=scatterer_count, propagation=propagation)
    return envs


@dataclass(frozen=True)
class ChannelSample:
    env_id: str
    sample_index: int
    h: np.ndarray
    g: np.ndarray
    z: np.ndarray
    label_class: int
    label_phases: np.ndarray
    best_snr: float

    @property
    def x(self) -> np.ndarray:
        return csi_features(self.h, self.g)

    def to_json(self) -> dict:
        return {
            "env": self.env_id,
            "idx": int(self.sample_index),
            "h_re": self.h.real.tolist(),
            "h_im": self.h.imag.tolist(),
            "g_re": self.g.real.tolist(),
            "g_im": self.g.imag.tolist(),
            "z": self.z.tolist(),
            "class": int(self.label_class),
            "phases": self.label_phases.tolist(),
            "best_snr": float(self.best_snr),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ChannelSample":
        h = np.array(d["h_re"], dtype=float) + 1j * np.array(d["h_im"], dtype=float)
        g = np.array(d["g_re"], dtype=float) + 1j * np.array(d["g_im"], dtype=float)
        z = np.array(d["z"], dtype=float)
        phases = np.array(d["phases"], dtype=float)
        if z.shape != (Z_DIM,) or h.shape != g.shape or phases.shape != h.shape:
            raise ValueError("inconsistent field lengths")
        return cls(str(d["env"]), int(d["idx"]), h, g, z, int(d["class"]), phases, float(d["best_snr"]))


def csi_features(h, g) -> np.ndarray:
    """x = [Re h0, Im h0, Re h1, ..., Re g0, Im g0, ...] (length 4K)."""
    h = np.asarray(h)
    g = np.asarray(g)
    return np.concatenate([np.stack([h.real, h.imag], axis=-1).reshape(*h.shape[:-1], -1),
                           np.stack([g.real, g.imag], axis=-1).reshape(*g.shape[:-1], -1)], axis=-1)


def extract_representation(spec: EnvironmentSpec, rx: Point3) -> np.ndarray:
    """AoD/AoA pairs and link lengths for the TX -> RIS -> RX path."""
    tx, ris = spec.tx_position, spec.ris_position
    tx_aod = spherical_from_point(spec.terminal_frame(tx), ris)
    ris_aoa = spherical_from_point(spec.frame, tx)
    ris_aod = spherical_from_point(spec.frame, rx)
    rx_aoa = spherical_from_point(spec.terminal_frame(rx), ris)
    return np.array([
        tx_aod.azimuth, tx_aod.elevation, ris_aoa.azimuth, ris_aoa.elevation, ris_aoa.distance,
        ris_aod.azimuth, ris_aod.elevation, rx_aoa.azimuth, rx_aoa.elevation, ris_aod.distance,
    ])


def make_sample(spec: EnvironmentSpec, index: int, rx: Point3, rng: np.random.Generator,
                codebook: PhaseCodebook | None = None, budget: LinkBudget = LinkBudget()) -> ChannelSample:
    codebook = codebook or default_codebook(spec.K)
    grid, cfg = spec.grid, spec.propagation
    tx_draw = ChannelDraw.sample(rng, spec.scatterer_count)
    rx_draw = ChannelDraw.sample(rng, 0)
    tx_reading = spherical_from_point(spec.frame, spec.tx_position)
    rx_reading = spherical_from_point(spec.frame, rx)
    h = composite_tx_ris(
        tx_ris_los_channel(grid, tx_reading, tx_draw, cfg),
        tx_ris_nlos_channel(grid, spec.scatterers, spec.tx_position, tx_draw, cfg),
    )
    g = ris_rx_channel(grid, rx_reading, rx_draw, cfg)
    cid, config, best = best_config(codebook, h, g, budget)
    return ChannelSample(spec.id, index, h, g, extract_representation(spec, rx), cid, config.phases.copy(), best)


def sample_rx(spec: EnvironmentSpec, rng: np.random.Generator) -> Point3:
    c, hw = spec.rx_region_center, spec.rx_region_halfwidth
    dx, dy = rng.uniform(-hw, hw, size=2)
    return Point3(c.x + dx, c.y + dy, c.z)


def generate_environment(spec: EnvironmentSpec, count: int, codebook: PhaseCodebook | None = None,
                         budget: LinkBudget = LinkBudget(), start: int = 0) -> "Dataset":
    """``count`` independent realisations; sample i depends only on (seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    codebook = codebook or default_codebook(spec.K)
    samples = []
    for i in range(start, start + count):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        rx = sample_rx(spec, rng)
        samples.append(make_sample(spec, i, rx, rng, codebook, budget))
    return Dataset(samples)


@dataclass
class Dataset:
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(self.samples + other.samples)

    @property
    def X(self) -> np.ndarray:
        return np.stack([s.x for s in self.samples])

    @property
    def Z(self) -> np.ndarray:
        return np.stack([s.z for s in self.samples])

    @property
    def H(self) -> np.ndarray:
        return np.stack([s.h for s in self.samples])

    @property
    def G(self) -> np.ndarray:
        return np.stack([s.g for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label_class for s in self.samples], dtype=int)

    @property
    def phases(self) -> np.ndarray:
        return np.stack([s.label_phases for s in self.samples])

    @property
    def best_snr(self) -> np.ndarray:
        return np.array([s.best_snr for s in self.samples])

    def keys(self) -> set:
        return {(s.env_id, s.sample_index) for s in self.samples}

    def where(self, pred) -> "Dataset":
        return Dataset([s for s in self.samples if pred(s)])

    def features(self, kind: str) -> np.ndarray:
        if kind == "x":
            return self.X
        if kind == "z":
            return self.Z
        raise ValueError(f"unknown feature kind {kind!r}")

    def by_env(self) -> dict:
        out: dict = {}
        for s in self.samples:
            out.setdefault(s.env_id, []).append(s)
        return {k: Dataset(v) for k, v in out.items()}


@dataclass(frozen=True)
class MixSpec:
    total: int
    alpha_e: float
    alpha_c: float
    seed: int = 0

    def __post_init__(self):
        if self.total < 0 or not (0 <= self.alpha_e <= 1 and 0 <= self.alpha_c <= 1):
            raise ValueError("mix needs total >= 0 and alphas in [0, 1]")

    def cell_counts(self) -> dict:
        """Per-(source, class) counts, rounded half-up; residue to the largest cell."""
        N, ae, ac = self.total, self.alpha_e, self.alpha_c
        raw = {
            (0, 1): N * ae * ac,
            (0, 2): N * ae * (1 - ac),
            (1, 1): N * (1 - ae) * (1 - ac),
            (1, 2): N * (1 - ae) * ac,
        }
        counts = {k: int(math.floor(v + 0.5)) for k, v in raw.items()}
        residue = N - sum(counts.values())
        if residue:
            largest = max(counts, key=lambda k: counts[k])
            counts[largest] += residue
        return counts


def mix_training_set(d1: Dataset, d2: Dataset, mix: MixSpec, exclude=None) -> Dataset:
    """Draw per-(source, class) cells without replacement and shuffle.

    ``exclude`` is a set of (env_id, sample_index) keys that must not be
    drawn, e.g. the samples already used for training.
    """
    exclude = exclude or set()
    rng = np.random.default_rng(mix.seed)
    chosen = []
    for (src, cls), n in mix.cell_counts().items():
        source = (d1, d2)[src]
        pool = [s for s in source if s.label_class == cls and (s.env_id, s.sample_index) not in exclude]
        if n > len(pool):
            name = pool[0].env_id if pool else (source[0].env_id if len(source) else f"source{src + 1}")
            raise ValueError(f"insufficient samples in cell ({name}, CLASS#{cls}): need {n}, have {len(pool)}")
        if n:
            idx = rng.choice(len(pool), size=n, replace=False)
            chosen.extend(pool[i] for i in sorted(idx))
    order = rng.permutation(len(chosen))
    return Dataset([chosen[i] for i in order])


def balanced_subset(data: Dataset, seed: int = 0, per_class: int | None = None) -> Dataset:
    """Equal number of samples per label, drawn without replacement."""
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for s in data:
        groups.setdefault(s.label_class, []).append(s)
    n = per_class if per_class is not None else min(len(v) for v in groups.values())
    chosen = []
    for cls in sorted(groups):
        pool = groups[cls]
        if n > len(pool):
            raise ValueError(f"insufficient samples for CLASS#{cls}: need {n}, have {len(pool)}")
        chosen.extend(pool[i] for i in sorted(rng.choice(len(pool), size=n, replace=False)))
    order = rng.permutation(len(chosen))
    return Dataset([chosen[i] for i in order])


def fit_standardization(features) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and std; constant coordinates get std 1."""
    f = np.asarray(features, dtype=float)
    mean = f.mean(axis=0)
    std = f.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    return mean, std


def save_jsonl(data: Dataset, path) -> None:
    with open(path, "w") as fh:
        for s in data:
            fh.write(json.dumps(s.to_json()) + "\n")


def load_jsonl(path) -> Dataset:
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(ChannelSample.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: malformed sample on line {lineno}: {exc}") from exc
    return Dataset(samples)
