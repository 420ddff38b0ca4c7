"""Polar-domain and far-field codebooks plus hierarchical region refinement."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .channel import ArrayGeometry, far_field_steering, steering_matrix
from .errors import ConfigurationError, SequencingError

DEFAULT_ANGLE_SPAN = (-math.pi / 3, math.pi / 3)
DEFAULT_RANGE_SPAN = (5.0, 50.0)
FAR_FIELD = math.inf


class BeamLabel(NamedTuple):
    """Sampling point of a codeword; ``range_m`` is ``inf`` for far-field beams."""

    angle_rad: float
    range_m: float

    @property
    def far_field(self) -> bool:
        return math.isinf(self.range_m)


def _check_span(span, name, positive=False):
    lo, hi = span
    if not lo <= hi:
        raise ConfigurationError(f"{name} span must satisfy lo <= hi, got {span}")
    if positive and not lo > 0:
        raise ConfigurationError(f"{name} span must be positive, got {span}")


def sample_angles(span, count: int, scheme: str = "sin") -> np.ndarray:
    """``count`` angles over ``span``; uniform in ``sin(alpha)`` or in ``alpha``."""
    if count < 1:
        raise ConfigurationError(f"need at least one angle, got {count}")
    lo, hi = span
    if scheme == "sin":
        u = _linspace(math.sin(lo), math.sin(hi), count)
        return np.arcsin(np.clip(u, -1.0, 1.0))
    if scheme == "uniform":
        return _linspace(lo, hi, count)
    raise ConfigurationError(f"unknown angle sampling scheme {scheme!r}")


def sample_ranges(span, count: int, scheme: str = "inverse") -> np.ndarray:
    """``count`` ranges over ``span``; uniform in ``1/r`` or in ``r``, increasing."""
    if count < 1:
        raise ConfigurationError(f"need at least one range, got {count}")
    lo, hi = span
    if scheme == "inverse":
        return np.sort(1.0 / _linspace(1.0 / hi, 1.0 / lo, count))
    if scheme == "uniform":
        return _linspace(lo, hi, count)
    raise ConfigurationError(f"unknown range sampling scheme {scheme!r}")


def _linspace(lo, hi, count):
    if count == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, count)


@dataclass(frozen=True, eq=False)
class PolarGrid:
    angles_rad: np.ndarray
    ranges_m: np.ndarray
    angle_span: tuple[float, float] = DEFAULT_ANGLE_SPAN
    range_span: tuple[float, float] = DEFAULT_RANGE_SPAN

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.angles_rad, dtype=float))
        r = np.atleast_1d(np.asarray(self.ranges_m, dtype=float))
        object.__setattr__(self, "angles_rad", a)
        object.__setattr__(self, "ranges_m", r)
        if a.size == 0 or r.size == 0:
            raise ConfigurationError("polar grid needs at least one angle and one range")
        _check_span(self.angle_span, "angle")
        _check_span(self.range_span, "range", positive=True)
        tol = 1e-12
        if a.min() < self.angle_span[0] - tol or a.max() > self.angle_span[1] + tol:
            raise ConfigurationError("grid angles fall outside the angle span")
        if r.min() < self.range_span[0] * (1 - tol) or r.max() > self.range_span[1] * (1 + tol):
            raise ConfigurationError("grid ranges fall outside the range span")
        if np.any(np.diff(a) <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigurationError("grid samples must be strictly increasing")

    @classmethod
    def uniform(cls, n_angles: int, n_ranges: int, angle_span=DEFAULT_ANGLE_SPAN,
                range_span=DEFAULT_RANGE_SPAN, angle_scheme="sin", range_scheme="inverse"):
        _check_span(angle_span, "angle")
        _check_span(range_span, "range", positive=True)
        return cls(sample_angles(angle_span, n_angles, angle_scheme),
                   sample_ranges(range_span, n_ranges, range_scheme),
                   tuple(angle_span), tuple(range_span))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.angles_rad.size, self.ranges_m.size)

    @property
    def size(self) -> int:
        return self.angles_rad.size * self.ranges_m.size


@dataclass(frozen=True, eq=False)
class Codebook:
    codewords: np.ndarray
    labels: tuple[BeamLabel, ...]
    geometry: ArrayGeometry

    def __post_init__(self):
        cw = np.asarray(self.codewords)
        if cw.ndim != 2 or cw.shape[0] != len(self.labels):
            raise ConfigurationError("codewords and labels disagree in count")
        if cw.shape[0] == 0:
            raise ConfigurationError("empty codebook")
        if cw.shape[1] != self.geometry.n_antennas:
            raise ConfigurationError("codeword length does not match the array")
        cw.setflags(write=False)

    def __len__(self):
        return len(self.labels)

    def to_csv(self, path) -> None:
        """Dump as ``angle_rad,range_m,re_0..re_{N-1},im_0..im_{N-1}`` rows."""
        n = self.geometry.n_antennas
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["angle_rad", "range_m"] + [f"re_{i}" for i in range(n)]
                            + [f"im_{i}" for i in range(n)])
            for label, cw in zip(self.labels, self.codewords):
                writer.writerow([repr(label.angle_rad), repr(label.range_m)]
                                + [repr(float(x)) for x in cw.real] + [repr(float(x)) for x in cw.imag])

    @classmethod
    def from_csv(cls, path, geometry: ArrayGeometry) -> "Codebook":
        n = geometry.n_antennas
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        data = np.array([[float(x) for x in row] for row in rows]).reshape(len(rows), 2 + 2 * n)
        labels = tuple(BeamLabel(a, r) for a, r in data[:, :2])
        return cls(data[:, 2:2 + n] + 1j * data[:, 2 + n:], labels, geometry)


def build_polar_codebook(geom: ArrayGeometry, grid: PolarGrid, order: str = "angle") -> Codebook:
    """Near-field steering vectors at every grid point.

    A codeword ``w`` is scored through ``|w^H h|``, so storing the steering
    vector itself puts the conjugation in the Hermitian product and aligns the
    phases of a user sitting on the grid point.

    ``order="angle"`` lists all ranges of the first angle, then the second angle
    and so on; ``order="range"`` sweeps all angles per range.
    """
    if grid.size == 0:
        raise ConfigurationError("empty grid")
    if order == "angle":
        aa, rr = np.meshgrid(grid.angles_rad, grid.ranges_m, indexing="ij")
    elif order == "range":
        rr, aa = np.meshgrid(grid.ranges_m, grid.angles_rad, indexing="ij")
    else:
        raise ConfigurationError(f"unknown codebook order {order!r}")
    aa, rr = aa.ravel(), rr.ravel()
    codewords = steering_matrix(geom, rr, aa)
    labels = tuple(BeamLabel(float(a), float(r)) for a, r in zip(aa, rr))
    return Codebook(codewords, labels, geom)


def build_far_field_codebook(geom: ArrayGeometry, angle_span, count: int,
                             scheme: str = "sin") -> Codebook:
    angles = sample_angles(angle_span, count, scheme)
    codewords = far_field_steering(geom, angles)
    labels = tuple(BeamLabel(float(a), FAR_FIELD) for a in angles)
    return Codebook(codewords, labels, geom)


@dataclass(frozen=True)
class HierarchySpec:
    """Coarse-to-fine schedule; level ``l`` (1-based) samples ``angles[l-1] x ranges[l-1]``."""

    levels: int = 3
    per_level_angles: Sequence[int] = (16, 16, 16)
    per_level_ranges: Sequence[int] = (4, 4, 4)
    shrink_factor: float = 2.0
    beam_width: int = 1
    angle_scheme: str = "sin"
    range_scheme: str = "inverse"

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError("hierarchy needs at least one level")
        if len(self.per_level_angles) != self.levels or len(self.per_level_ranges) != self.levels:
            raise ConfigurationError("per-level counts must list one entry per level")
        if min(self.per_level_angles) < 1 or min(self.per_level_ranges) < 1:
            raise ConfigurationError("per-level counts must be >= 1")
        if not self.shrink_factor > 1:
            raise ConfigurationError("shrink_factor must exceed 1")
        if self.beam_width < 1:
            raise ConfigurationError("beam_width must be >= 1")

    @classmethod
    def constant(cls, levels: int, n_angles: int, n_ranges: int, **kw) -> "HierarchySpec":
        return cls(levels, (n_angles,) * levels, (n_ranges,) * levels, **kw)

    @property
    def total_codewords(self) -> int:
        return int(sum(a * r for a, r in zip(self.per_level_angles, self.per_level_ranges)))


def _range_coord(r, scheme):
    return 1.0 / r if scheme == "inverse" else r


def _range_from_coord(u, scheme):
    return 1.0 / u if scheme == "inverse" else u


def _contract(center, lo, hi, width):
    """Interval of ``width`` centred on ``center``, shifted to stay in ``[lo, hi]``."""
    width = min(width, hi - lo)
    a = center - width / 2.0
    b = center + width / 2.0
    if a < lo:
        a, b = lo, lo + width
    if b > hi:
        a, b = hi - width, hi
    return a, b


def refine_region(parent: BeamLabel, level: int, spec: HierarchySpec,
                  current_spans: tuple[tuple[float, float], tuple[float, float]],
                  global_spans: tuple[tuple[float, float], tuple[float, float]] | None = None,
                  ) -> PolarGrid:
    """Grid for level ``level + 1`` centred on the winner of ``level``.

    The angle span shrinks by ``spec.shrink_factor`` in radians, the range span
    shrinks by the same factor in the range-sampling coordinate (``1/r`` by
    default).  The child window is shifted, never truncated, to stay inside
    ``global_spans``.
    """
    if not 1 <= level < spec.levels:
        raise SequencingError(f"cannot refine past level {level} of {spec.levels}")
    (a_lo, a_hi), (r_lo, r_hi) = current_spans
    if global_spans is None:
        global_spans = current_spans
    (ga_lo, ga_hi), (gr_lo, gr_hi) = global_spans
    if not (a_lo - 1e-12 <= parent.angle_rad <= a_hi + 1e-12 and r_lo * (1 - 1e-12) <= parent.range_m <= r_hi * (1 + 1e-12)):
        raise ConfigurationError(f"parent {parent} outside current spans {current_spans}")

    angle_span = _contract(parent.angle_rad, ga_lo, ga_hi, (a_hi - a_lo) / spec.shrink_factor)

    scheme = spec.range_scheme
    u_cur = sorted((_range_coord(r_lo, scheme), _range_coord(r_hi, scheme)))
    u_glob = sorted((_range_coord(gr_lo, scheme), _range_coord(gr_hi, scheme)))
    u_lo, u_hi = _contract(_range_coord(parent.range_m, scheme), u_glob[0], u_glob[1],
                           (u_cur[1] - u_cur[0]) / spec.shrink_factor)
    r_new = sorted((_range_from_coord(u_lo, scheme), _range_from_coord(u_hi, scheme)))
    range_span = (max(r_new[0], gr_lo), min(r_new[1], gr_hi))

    return PolarGrid.uniform(spec.per_level_angles[level], spec.per_level_ranges[level],
                             angle_span, range_span, spec.angle_scheme, spec.range_scheme)
