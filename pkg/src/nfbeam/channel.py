"""Near-field ULA geometry, spherical-wavefront channels and link metrics.

The array is a uniform linear array on the y-axis with elements at
``(0, n * d)`` for ``n`` in ``{-N/2, ..., N/2 - 1}``.  A user at polar
location ``(r, alpha)`` sits at ``(r cos alpha, r sin alpha)``.  All steering
entries use the phase convention ``exp(-j M (r_n - r))`` so that the centre
element (``n = 0``) is always exactly ``1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError

SPEED_OF_LIGHT = 2.998e8
DEFAULT_REFERENCE_RANGE = 5.0

__all__ = [
    "SPEED_OF_LIGHT",
    "DEFAULT_REFERENCE_RANGE",
    "ArrayGeometry",
    "PolarLocation",
    "FsplMode",
    "ChannelVector",
    "NoiseModel",
    "rayleigh_distance",
    "element_distance",
    "near_field_steering",
    "far_field_steering",
    "steering_matrix",
    "path_loss_beta",
    "near_field_channel",
    "noise_power",
    "make_noise",
    "sinr",
    "achievable_rate",
    "received_signal",
    "matched_filter",
    "matched_filter_bound",
    "batch_rates",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    ``spacing_m`` defaults to half a wavelength at ``carrier_hz``.
    """

    n_antennas: int
    carrier_hz: float
    spacing_m: float | None = None

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise ValueError(f"n_antennas must be an integer >= 2, got {self.n_antennas}")
        if self.n_antennas % 2:
            raise ValueError(f"n_antennas must be even, got {self.n_antennas}")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.spacing_m is None:
            object.__setattr__(self, "spacing_m", self.wavelength_m / 2)
        elif not self.spacing_m > 0:
            raise ValueError(f"spacing_m must be positive, got {self.spacing_m}")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi * self.carrier_hz / SPEED_OF_LIGHT

    @property
    def aperture_m(self) -> float:
        return (self.n_antennas - 1) * self.spacing_m

    @property
    def indices(self) -> np.ndarray:
        half = self.n_antennas // 2
        return np.arange(-half, half)

    @property
    def positions(self) -> np.ndarray:
        """Element coordinates, shape ``(N, 2)``."""
        y = self.indices * self.spacing_m
        return np.stack([np.zeros_like(y), y], axis=1)

    @property
    def rayleigh_distance_m(self) -> float:
        return rayleigh_distance(self.aperture_m, self.carrier_hz)


@dataclass(frozen=True)
class PolarLocation:
    range_m: float
    angle_rad: float

    def __post_init__(self):
        if not self.range_m > 0:
            raise ValueError(f"range_m must be positive, got {self.range_m}")
        if not -math.pi / 2 <= self.angle_rad <= math.pi / 2:
            raise ValueError(f"angle_rad outside [-pi/2, pi/2]: {self.angle_rad}")

    @property
    def cartesian(self) -> tuple[float, float]:
        return (self.range_m * math.cos(self.angle_rad), self.range_m * math.sin(self.angle_rad))


class FsplMode(str, enum.Enum):
    NORMALIZED = "normalized"
    PAPER_FSPL = "paper_fspl"


@dataclass(frozen=True, eq=False)
class ChannelVector:
    coefficients: np.ndarray
    location: PolarLocation
    fspl_mode: FsplMode
    beta: float

    def __len__(self):
        return len(self.coefficients)


@dataclass(frozen=True)
class NoiseModel:
    snr_db: float
    sigma2: float
    reference_range_m: float = DEFAULT_REFERENCE_RANGE
    tx_power: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")


def rayleigh_distance(aperture_m: float, carrier_hz: float) -> float:
    """Near/far field boundary ``2 D^2 f_c / C`` in meters."""
    if not carrier_hz > 0:
        raise ValueError(f"carrier_hz must be positive, got {carrier_hz}")
    if aperture_m < 0:
        raise ValueError(f"aperture_m must be non-negative, got {aperture_m}")
    return 2.0 * aperture_m**2 * carrier_hz / SPEED_OF_LIGHT


def _check_index(geom: ArrayGeometry, n) -> None:
    half = geom.n_antennas // 2
    n_arr = np.asarray(n)
    if np.any(n_arr < -half) or np.any(n_arr >= half) or np.any(n_arr != np.round(n_arr)):
        raise IndexError(f"element index {n} outside [{-half}, {half - 1}]")


def element_distance(geom: ArrayGeometry, loc: PolarLocation, n) -> float | np.ndarray:
    """Distance from element ``n`` (scalar or array of indices) to the user."""
    _check_index(geom, n)
    n = np.asarray(n, dtype=float)
    d = geom.spacing_m
    r = loc.range_m
    sq = r * r + n * n * d * d - 2.0 * r * n * d * math.sin(loc.angle_rad)
    out = np.sqrt(np.maximum(sq, 0.0))
    return float(out) if out.ndim == 0 else out


def _distances(geom: ArrayGeometry, ranges: np.ndarray, angles: np.ndarray) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)[..., None]
    angles = np.asarray(angles, dtype=float)[..., None]
    nd = geom.indices * geom.spacing_m
    sq = ranges**2 + nd**2 - 2.0 * ranges * nd * np.sin(angles)
    return np.sqrt(np.maximum(sq, 0.0))


def steering_matrix(geom: ArrayGeometry, ranges, angles) -> np.ndarray:
    """Near-field steering vectors for broadcastable ``ranges``/``angles``.

    Returns an array of shape ``broadcast(ranges, angles).shape + (N,)``.
    """
    ranges, angles = np.broadcast_arrays(np.asarray(ranges, float), np.asarray(angles, float))
    rn = _distances(geom, ranges, angles)
    r = ranges[..., None]
    nd = geom.indices * geom.spacing_m
    # r_n - r without cancellation at large r
    excess = (nd * nd - 2.0 * r * nd * np.sin(angles)[..., None]) / (rn + r)
    return np.exp(-1j * geom.wavenumber * excess)


def near_field_steering(geom: ArrayGeometry, loc: PolarLocation) -> np.ndarray:
    return steering_matrix(geom, loc.range_m, loc.angle_rad)


def far_field_steering(geom: ArrayGeometry, angle_rad) -> np.ndarray:
    """Plane-wave steering ``exp(j M n d sin(alpha))``; vectorised over angles."""
    angle = np.asarray(angle_rad, dtype=float)
    if np.any(np.abs(angle) > math.pi / 2 + 1e-12):
        raise ValueError(f"angle outside [-pi/2, pi/2]: {angle_rad}")
    phase = geom.wavenumber * geom.spacing_m * np.sin(angle)[..., None] * geom.indices
    return np.exp(1j * phase)


def path_loss_beta(geom: ArrayGeometry, range_m, fspl_mode: FsplMode):
    """Common amplitude coefficient; ``(lambda / (4 pi r))**2`` in PAPER_FSPL mode."""
    fspl_mode = FsplMode(fspl_mode)
    if fspl_mode is FsplMode.NORMALIZED:
        return np.ones_like(np.asarray(range_m, dtype=float))[()] * 1.0
    return (geom.wavelength_m / (4 * math.pi * np.asarray(range_m, dtype=float))) ** 2


def near_field_channel(geom: ArrayGeometry, loc: PolarLocation,
                       fspl_mode: FsplMode = FsplMode.NORMALIZED) -> ChannelVector:
    fspl_mode = FsplMode(fspl_mode)
    beta = float(path_loss_beta(geom, loc.range_m, fspl_mode))
    coeffs = beta * near_field_steering(geom, loc)
    return ChannelVector(coeffs, loc, fspl_mode, beta)


def noise_power(snr_db: float, geom: ArrayGeometry, fspl_mode: FsplMode = FsplMode.NORMALIZED,
                r_ref: float = DEFAULT_REFERENCE_RANGE, tx_power: float = 1.0) -> float:
    """Noise power that makes a matched-filter link at ``r_ref`` see ``snr_db``.

    ``sigma2 = G * beta(r_ref)**2 * N**2 * 10**(-snr_db / 10)``.
    """
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    beta = float(path_loss_beta(geom, r_ref, fspl_mode))
    return tx_power * beta**2 * geom.n_antennas**2 * 10.0 ** (-snr_db / 10.0)


def make_noise(snr_db: float, geom: ArrayGeometry, fspl_mode: FsplMode = FsplMode.NORMALIZED,
               r_ref: float = DEFAULT_REFERENCE_RANGE, tx_power: float = 1.0) -> NoiseModel:
    sigma2 = noise_power(snr_db, geom, fspl_mode, r_ref, tx_power)
    return NoiseModel(float(snr_db), sigma2, r_ref, tx_power)


def _coeffs(h) -> np.ndarray:
    return np.asarray(getattr(h, "coefficients", h))


def sinr(w, target, interferers: Sequence = (), noise: NoiseModel | None = None) -> float:
    """``G |w^H h_k|^2 / (sum_i |w^H h_i|^2 + sigma2)``."""
    if noise is None:
        raise ValueError("noise model required")
    w = np.asarray(getattr(w, "w", w))
    h = _coeffs(target)
    if h.shape != w.shape:
        raise DimensionError(f"beam length {w.shape} != channel length {h.shape}")
    signal = noise.tx_power * abs(np.vdot(w, h)) ** 2
    interference = 0.0
    for other in interferers:
        g = _coeffs(other)
        if g.shape != w.shape:
            raise DimensionError(f"beam length {w.shape} != interferer length {g.shape}")
        interference += abs(np.vdot(w, g)) ** 2
    return float(signal / (interference + noise.sigma2))


def achievable_rate(w, target, interferers: Sequence = (), noise: NoiseModel | None = None) -> float:
    """Rate in bits/s/Hz treating interference as noise."""
    return float(np.log2(1.0 + sinr(w, target, interferers, noise)))


def received_signal(w, target, noise: NoiseModel, symbol: complex = 1.0,
                    rng: np.random.Generator | None = None) -> complex:
    """One noisy observation ``sqrt(G) w^H h s + n`` with ``n ~ CN(0, sigma2)``."""
    if not math.isclose(abs(symbol), 1.0, rel_tol=1e-12):
        raise ValueError(f"|symbol| must be 1, got {abs(symbol)}")
    rng = np.random.default_rng() if rng is None else rng
    w = np.asarray(getattr(w, "w", w))
    clean = math.sqrt(noise.tx_power) * np.vdot(w, _coeffs(target)) * symbol
    scale = math.sqrt(noise.sigma2 / 2.0)
    n = scale * (rng.standard_normal() + 1j * rng.standard_normal())
    return complex(clean + n)


def matched_filter(target) -> np.ndarray:
    """Phase-only beam ``exp(j arg h_n)``; maximises ``|w^H h|`` over unit-modulus beams."""
    return np.exp(1j * np.angle(_coeffs(target)))


def matched_filter_bound(target, noise: NoiseModel) -> float:
    """Interference-free rate bound ``log2(1 + G (sum |h_n|)^2 / sigma2)``."""
    gain = np.sum(np.abs(_coeffs(target)))
    return float(np.log2(1.0 + noise.tx_power * gain**2 / noise.sigma2))


def batch_rates(w: np.ndarray, channels: np.ndarray, sigma2, tx_power: float = 1.0) -> np.ndarray:
    """Rates for stacked links.

    ``w`` has shape ``(..., N)`` and ``channels`` shape ``(..., K, N)`` with the
    served user at index 0 along the K axis; ``sigma2`` broadcasts against the
    leading dimensions.
    """
    w = np.asarray(w)
    channels = np.asarray(channels)
    if channels.shape[-1] != w.shape[-1]:
        raise DimensionError(f"beam length {w.shape[-1]} != channel length {channels.shape[-1]}")
    proj = np.einsum("...n,...kn->...k", np.conj(w), channels)
    power = proj.real**2 + proj.imag**2
    interference = power[..., 1:].sum(axis=-1)
    gamma = tx_power * power[..., 0] / (interference + sigma2)
    return np.log2(1.0 + gamma)
