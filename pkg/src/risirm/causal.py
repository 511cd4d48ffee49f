"""Interventions on the RIS departure azimuth and the do-calculus estimator.

``do(z1 = z')`` places the RX on the ray leaving the RIS at azimuth ``z'``
instead of sampling it from the environment's region; everything else in the
generating process is untouched.  The estimator averages the predictor's
CLASS#1 rate under each intervention, weighted by the scenario distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, EnvironmentSpec, make_sample
from .evaluation import predict_classes
from .geometry import GeometryError, Point3, SphericalReading, point_from_spherical
from .optimizer import LinkBudget, PhaseCodebook, default_codebook

SUPPORT_DEG = np.linspace(-50.0, 50.0, 19)
_DO_TAG = 0xD0


@dataclass(frozen=True)
class InterventionSpec:
    name: str
    support_deg: np.ndarray
    weights: np.ndarray
    base_n: int = 1000

    def __post_init__(self):
        s = np.asarray(self.support_deg, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.shape != w.shape or s.ndim != 1:
            raise ValueError("support and weights must be 1-D and equally long")
        if np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "support_deg", s)
        object.__setattr__(self, "weights", w)

    def point_counts(self) -> np.ndarray:
        return np.floor(self.base_n * self.weights + 0.5).astype(int)

    def to_json(self) -> dict:
        return {"name": self.name, "support_deg": self.support_deg.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, d: dict, base_n: int = 1000) -> "InterventionSpec":
        return cls(d["name"], np.array(d["support_deg"]), np.array(d["weights"]), base_n)


def _normalised(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    # absorb the last rounding ulp so the sum is 1 within 1e-12
    w[-1] = 1.0 - w[:-1].sum()
    return w


def point_mass(z_deg: float, base_n: int = 1000) -> InterventionSpec:
    """Single-atom scenario on the regular 19-point grid."""
    i = int(np.argmin(np.abs(SUPPORT_DEG - z_deg)))
    w = np.zeros(len(SUPPORT_DEG))
    w[i] = 1.0
    return InterventionSpec(f"point_{SUPPORT_DEG[i]:+.2f}", SUPPORT_DEG.copy(), w, base_n)


def default_scenarios(base_n: int = 1000, ratio: float = 0.8) -> list[InterventionSpec]:
    """Uniform, centre-peaked, edge-peaked, left- and right-biased geometric."""
    j = np.arange(len(SUPPORT_DEG))
    mid = (len(j) - 1) / 2
    shapes = {
        "uniform": np.ones(len(j)),
        "triangular_center": mid + 1 - np.abs(j - mid),
        "triangular_edges": 1 + np.abs(j - mid),
        "geometric_left": ratio ** j,
        "geometric_right": ratio ** j[::-1],
    }
    return [InterventionSpec(k, SUPPORT_DEG.copy(), _normalised(v), base_n) for k, v in shapes.items()]


def save_scenarios(specs, path) -> None:
    Path(path).write_text(json.dumps([s.to_json() for s in specs], indent=1) + "\n")


def load_scenarios(path, base_n: int = 1000) -> list[InterventionSpec]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = [doc]
    return [InterventionSpec.from_json(d, base_n) for d in doc]


def _rx_on_ray(env: EnvironmentSpec, azimuth: float, rng: np.random.Generator) -> Point3:
    """RX on the azimuth ray, radial distance uniform over the region's depth."""
    centre = env.rx_region_center
    d_c = centre.distance_to(env.ris_position)
    hw = env.rx_region_halfwidth
    d = rng.uniform(max(d_c - hw, 1e-3), d_c + hw)
    dz = centre.z - env.ris_position.z
    el = math.asin(max(-1.0, min(1.0, dz / d)))
    return point_from_spherical(env.frame, SphericalReading(d, azimuth, el))


def generate_do_samples(env: EnvironmentSpec, z1_deg: float, count: int, codebook: PhaseCodebook | None = None,
                        budget: LinkBudget = LinkBudget(), seed: int = 0) -> Dataset:
    """``count`` samples generated under do(ris_aod_azimuth = z1_deg)."""
    az = math.radians(z1_deg)
    if not -math.pi / 2 < az < math.pi / 2:
        raise GeometryError(f"azimuth {z1_deg} deg is outside the RIS front half-space")
    if count < 0:
        raise ValueError("count must be >= 0")
    codebook = codebook or default_codebook(env.K)
    key = int(round(z1_deg * 1e6))
    samples = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([env.seed, _DO_TAG, seed, key & 0xFFFFFFFF, int(key < 0), i]))
        rx = _rx_on_ray(env, az, rng)
        samples.append(make_sample(env, i, rx, rng, codebook, budget))
    return Dataset(samples)


def generate_base_samples(env: EnvironmentSpec, count: int, azimuth_range_deg=(-60.0, 60.0),
                          codebook: PhaseCodebook | None = None, budget: LinkBudget = LinkBudget(),
                          seed: int = 0) -> Dataset:
    """Observational data with the departure azimuth uniform over a sector."""
    codebook = codebook or default_codebook(env.K)
    lo, hi = (math.radians(a) for a in azimuth_range_deg)
    samples = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([env.seed, _DO_TAG + 1, seed, i]))
        rx = _rx_on_ray(env, rng.uniform(lo, hi), rng)
        samples.append(make_sample(env, i, rx, rng, codebook, budget))
    return Dataset(samples)


def class1_rate(classes) -> float:
    c = np.asarray(classes)
    return float(np.mean(c == 1)) if c.size else float("nan")


def conditionals(predictor, env: EnvironmentSpec, support_deg, counts, codebook: PhaseCodebook | None = None,
                 budget: LinkBudget = LinkBudget(), seed: int = 0) -> np.ndarray:
    """P0(class == 1 | do(z1 = z')) per support point; NaN where count is 0.

    ``predictor`` is an MlpParams or any callable mapping a Dataset to
    class ids.
    """
    codebook = codebook or default_codebook(env.K)
    out = np.full(len(support_deg), np.nan)
    for i, (z, n) in enumerate(zip(support_deg, counts)):
        if n == 0:
            continue
        data = generate_do_samples(env, float(z), int(n), codebook, budget, seed)
        out[i] = class1_rate(_classes(predictor, data, codebook))
    return out


def _classes(predictor, data: Dataset, codebook: PhaseCodebook):
    if callable(predictor):
        return predictor(data)
    return predict_classes(predictor, data, codebook)


def combine(cond: np.ndarray, weights) -> float:
    """Weighted sum of conditionals over points that were sampled.

    Weight on points with no samples is dropped and the rest renormalised.
    """
    w = np.asarray(weights, dtype=float)
    ok = ~np.isnan(cond)
    if not ok.any() or w[ok].sum() == 0:
        raise ValueError("empty intervention: no support point received samples")
    return float(np.sum(cond[ok] * w[ok]) / w[ok].sum())


def do_probability(predictor, spec: InterventionSpec, env: EnvironmentSpec, codebook: PhaseCodebook | None = None,
                   budget: LinkBudget = LinkBudget(), seed: int = 0):
    """Return (Pr(class == 1), per-point conditionals)."""
    counts = spec.point_counts()
    if counts.sum() == 0:
        raise ValueError("empty intervention: every support point rounds to zero samples")
    cond = conditionals(predictor, env, spec.support_deg, counts, codebook, budget, seed)
    return combine(cond, spec.weights), cond


def simulate_best(spec: InterventionSpec, env: EnvironmentSpec, codebook: PhaseCodebook | None = None,
                  budget: LinkBudget = LinkBudget(), seed: int = 0) -> float:
    """CLASS#1 rate of exhaustive-search labels when z1 is drawn from the scenario."""
    codebook = codebook or default_codebook(env.K)
    rng = np.random.default_rng(np.random.SeedSequence([env.seed, _DO_TAG + 2, seed]))
    picks = rng.choice(len(spec.support_deg), size=spec.base_n, p=spec.weights)
    labels = []
    for point in np.unique(picks):
        n = int(np.sum(picks == point))
        # distinct stream from the estimator's per-point samples
        data = generate_do_samples(env, float(spec.support_deg[point]), n, codebook, budget, seed=seed + 7919)
        labels.extend(data.labels.tolist())
    return class1_rate(labels)


def compare_with_best(predictor, spec: InterventionSpec, env: EnvironmentSpec,
                      codebook: PhaseCodebook | None = None, budget: LinkBudget = LinkBudget(), seed: int = 0):
    """(predicted probability, simulated BEST probability, absolute deviation)."""
    predicted, _ = do_probability(predictor, spec, env, codebook, budget, seed)
    simulated = simulate_best(spec, env, codebook, budget, seed)
    return predicted, simulated, abs(predicted - simulated)
