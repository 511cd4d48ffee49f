"""Geometric RIS channel model.

The RIS-RX and TX-RIS line-of-sight links share one structural form,
``sqrt(G * L) * exp(i*eta) * a(az, el)``; the TX-RIS scattered component is a
gain-weighted sum of steering vectors, one per scatterer near the TX.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GeometryError,
    LocalFrame,
    Point3,
    SphericalReading,
    boresight_angle,
    spherical_from_offsets,
    unit_direction,
)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PropagationCfg:
    """Element pattern, path-loss profile and scatter normalisation."""

    pattern_q: float = 0.285
    path_loss: str = "free-space"
    nlos_normalization: str = "linear"

    def __post_init__(self):
        if self.path_loss not in ("free-space", "inh-los"):
            raise ValueError(f"unknown path-loss profile {self.path_loss!r}")
        if self.nlos_normalization not in ("linear", "sqrt"):
            raise ValueError(f"unknown nlos_normalization {self.nlos_normalization!r}")


@dataclass(frozen=True)
class RisGrid:
    rows: int
    cols: int
    element_spacing: float
    frame: LocalFrame
    carrier_frequency: float

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("RIS grid needs at least one element")
        if self.element_spacing <= 0 or self.carrier_frequency <= 0:
            raise ValueError("element spacing and carrier frequency must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def element_offsets(self) -> np.ndarray:
        """Local (x, boresight, z) offsets, element k = row * cols + col.

        Element 0 sits at the frame origin.  Consecutive indices step along
        ``local_x``, so the alternating codebook pattern alternates across
        columns.
        """
        r, c = np.divmod(np.arange(self.size), self.cols)
        x = c * self.element_spacing
        z = r * self.element_spacing
        return np.stack([x, np.zeros(self.size), z], axis=1)

    @classmethod
    def half_wavelength(cls, rows: int, cols: int, frame: LocalFrame, carrier_frequency: float) -> "RisGrid":
        lam = SPEED_OF_LIGHT / carrier_frequency
        return cls(rows, cols, lam / 2.0, frame, carrier_frequency)


@dataclass(frozen=True)
class Scatterer:
    position: Point3
    index: int


@dataclass(frozen=True)
class ChannelDraw:
    eta: float
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        if not 0.0 <= self.eta < 2 * math.pi:
            raise ValueError("eta must lie in [0, 2*pi)")

    @classmethod
    def sample(cls, rng: np.random.Generator, n_scatterers: int = 0) -> "ChannelDraw":
        eta = float(rng.uniform(0.0, 2 * math.pi))
        # CN(0, 1): unit total variance split across real and imaginary parts
        gamma = (rng.standard_normal(n_scatterers) + 1j * rng.standard_normal(n_scatterers)) / math.sqrt(2.0)
        return cls(eta, gamma)


def radiation_pattern(angle, q: float = 0.285):
    """cos^(2q) element gain, zero outside the front half-space."""
    angle = np.asarray(angle, dtype=float)
    front = angle < math.pi / 2
    c = np.where(front, np.cos(np.where(front, angle, 0.0)), 0.0)
    g = np.where(front, 2.0 * (2.0 * q + 1.0) * np.power(np.clip(c, 0.0, None), 2.0 * q), 0.0)
    return float(g) if g.ndim == 0 else g


def path_loss(distance, carrier_frequency: float, profile: str = "free-space"):
    """Linear power attenuation over ``distance`` metres."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs a positive distance")
    if profile == "free-space":
        lam = SPEED_OF_LIGHT / carrier_frequency
        loss = (lam / (4 * math.pi * d)) ** 2
    elif profile == "inh-los":
        loss_db = 32.4 + 17.3 * np.log10(d) + 20.0 * math.log10(carrier_frequency / 1e9)
        loss = 10.0 ** (-loss_db / 10.0)
    else:
        raise ValueError(f"unknown path-loss profile {profile!r}")
    return float(loss) if loss.ndim == 0 else loss


def array_response(grid: RisGrid, azimuth, elevation) -> np.ndarray:
    """Steering vector; broadcasting angle arrays adds leading axes."""
    u = unit_direction(azimuth, elevation)
    phase = (2 * math.pi / grid.wavelength) * (u @ grid.element_offsets().T)
    return np.exp(1j * phase)


def _los_link(grid: RisGrid, reading: SphericalReading, draw: ChannelDraw, cfg: PropagationCfg) -> np.ndarray:
    gain = radiation_pattern(boresight_angle(reading.azimuth, reading.elevation), cfg.pattern_q)
    loss = path_loss(reading.distance, grid.carrier_frequency, cfg.path_loss)
    return math.sqrt(gain * loss) * np.exp(1j * draw.eta) * array_response(grid, reading.azimuth, reading.elevation)


def ris_rx_channel(grid: RisGrid, rx_reading: SphericalReading, draw: ChannelDraw,
                   cfg: PropagationCfg = PropagationCfg()) -> np.ndarray:
    return _los_link(grid, rx_reading, draw, cfg)


def tx_ris_los_channel(grid: RisGrid, tx_reading: SphericalReading, draw: ChannelDraw,
                       cfg: PropagationCfg = PropagationCfg()) -> np.ndarray:
    return _los_link(grid, tx_reading, draw, cfg)


def tx_ris_nlos_channel(grid: RisGrid, scatterers, tx_position: Point3, draw: ChannelDraw,
                        cfg: PropagationCfg = PropagationCfg()) -> np.ndarray:
    """Scattered TX-RIS component; zero when there are no scatterers."""
    S = len(scatterers)
    if S == 0:
        return np.zeros(grid.size, dtype=complex)
    gamma = np.asarray(draw.gamma, dtype=complex)
    if gamma.shape != (S,):
        raise ValueError(f"expected {S} scatterer gains, got {gamma.shape}")
    pos = np.array([s.position.as_array() for s in scatterers])
    ris = grid.frame.origin.as_array()
    d_s = np.linalg.norm(pos - tx_position.as_array(), axis=1) + np.linalg.norm(pos - ris, axis=1)
    _, az, el = spherical_from_offsets(grid.frame.to_local(pos - ris))
    gain = radiation_pattern(boresight_angle(az, el), cfg.pattern_q)
    loss = path_loss(d_s, grid.carrier_frequency, cfg.path_loss)
    amp = gamma * np.sqrt(gain * loss)
    norm = S if cfg.nlos_normalization == "linear" else math.sqrt(S)
    # elementwise sum keeps equal-and-opposite terms cancelling exactly
    return np.sum(amp[:, None] * array_response(grid, az, el), axis=0) / norm


def composite_tx_ris(los: np.ndarray, nlos: np.ndarray) -> np.ndarray:
    los = np.asarray(los)
    nlos = np.asarray(nlos)
    if los.shape != nlos.shape:
        raise ValueError(f"length mismatch: {los.shape} vs {nlos.shape}")
    return los + nlos


def place_scatterers(rng: np.random.Generator, count: int, tx: Point3, frame: LocalFrame,
                     radius: float = 5.0, clearance: float = 0.5) -> list[Scatterer]:
    """Uniform draws in a ball around the TX, in front of the RIS.

    Points closer than ``clearance`` to the TX or to the RIS boresight line
    are rejected and redrawn.
    """
    out: list[Scatterer] = []
    tx_a = tx.as_array()
    ris = frame.origin.as_array()
    b = np.asarray(frame.boresight)
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 10_000 * max(count, 1):
            raise GeometryError("could not place scatterers in the requested region")
        v = rng.uniform(-1.0, 1.0, size=3)
        if v @ v > 1.0:
            continue
        p = tx_a + radius * v
        rel = p - ris
        along = rel @ b
        if along <= 0:
            continue
        if np.linalg.norm(p - tx_a) < clearance or np.linalg.norm(rel - along * b) < clearance:
            continue
        out.append(Scatterer(Point3.from_array(p), len(out)))
    return out
