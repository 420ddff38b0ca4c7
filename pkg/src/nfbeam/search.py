"""Codebook-based beam training baselines.

Every search scores candidates with the full SINR rate of the served user
(interferers included) and reports its pilot overhead as the number of
codewords it scored.  A scenario is anything with ``target_channel``,
``interferer_channels`` and ``noise`` attributes, e.g. a ``TrainingSample``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, achievable_rate, batch_rates
from .codebook import (DEFAULT_ANGLE_SPAN, DEFAULT_RANGE_SPAN, BeamLabel, Codebook, HierarchySpec,
                       PolarGrid, build_far_field_codebook, build_polar_codebook, refine_region)
from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class SearchResult:
    weights: np.ndarray
    label: BeamLabel
    score: float
    overhead: int


class RateCounter:
    """Counts rate evaluations; pass one to a search to audit its overhead."""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def _scenario_arrays(scenario):
    chans = np.stack([scenario.target_channel.coefficients]
                     + [c.coefficients for c in scenario.interferer_channels])
    return chans, scenario.noise


def codebook_rates(codebook: Codebook, scenario, counter: RateCounter | None = None) -> np.ndarray:
    chans, noise = _scenario_arrays(scenario)
    rates = batch_rates(codebook.codewords, chans[None], noise.sigma2, noise.tx_power)
    if counter is not None:
        counter.add(len(codebook))
    return rates


def select_codeword(codebook: Codebook, scenario, counter: RateCounter | None = None) -> SearchResult:
    """Rate-maximising codeword; the lowest index wins ties."""
    if codebook is None or len(codebook) == 0:
        raise ConfigurationError("empty codebook")
    rates = codebook_rates(codebook, scenario, counter)
    best = int(np.argmax(rates))
    w = codebook.codewords[best]
    score = achievable_rate(w, scenario.target_channel, scenario.interferer_channels, scenario.noise)
    return SearchResult(w, codebook.labels[best], score, len(codebook))


def budget_grid(grid: PolarGrid, budget: int | None, angle_scheme="sin", range_scheme="inverse") -> PolarGrid:
    """Shrink ``grid`` to at most ``budget`` points: ``isqrt(budget)`` angles, then ranges."""
    if budget is None:
        return grid
    if budget < 1:
        raise ConfigurationError(f"budget must be >= 1, got {budget}")
    n_a, n_r = grid.shape
    if n_a * n_r <= budget:
        return grid
    new_a = min(n_a, math.isqrt(budget))
    new_r = min(n_r, budget // new_a)
    return PolarGrid.uniform(new_a, new_r, grid.angle_span, grid.range_span, angle_scheme, range_scheme)


def exhaustive_search(geom: ArrayGeometry, scenario, grid: PolarGrid, budget: int | None = None,
                      counter: RateCounter | None = None) -> SearchResult:
    """Scan every (range, angle) pair, angles inner, ranges outer."""
    grid = budget_grid(grid, budget)
    return select_codeword(build_polar_codebook(geom, grid, order="range"), scenario, counter)


def nf_hierarchical_search(geom: ArrayGeometry, scenario, spec: HierarchySpec = HierarchySpec(),
                           angle_span=DEFAULT_ANGLE_SPAN, range_span=DEFAULT_RANGE_SPAN,
                           counter: RateCounter | None = None) -> SearchResult:
    """Coarse-to-fine polar search keeping ``spec.beam_width`` survivors per level."""
    global_spans = (tuple(angle_span), tuple(range_span))
    frontier = [PolarGrid.uniform(spec.per_level_angles[0], spec.per_level_ranges[0], angle_span,
                                  range_span, spec.angle_scheme, spec.range_scheme)]
    overhead = 0
    for level in range(1, spec.levels + 1):
        scored = []
        for grid in frontier:
            book = build_polar_codebook(geom, grid)
            rates = codebook_rates(book, scenario, counter)
            overhead += len(book)
            scored.extend((float(rates[i]), len(scored) + i, book.codewords[i], book.labels[i], grid)
                          for i in range(len(book)))
        scored.sort(key=lambda t: (-t[0], t[1]))
        survivors = scored[:spec.beam_width]
        if level < spec.levels:
            frontier = [refine_region(lab, level, spec, (g.angle_span, g.range_span), global_spans)
                        for _, _, _, lab, g in survivors]
    best = survivors[0]
    _, _, w, label, _ = best
    score = achievable_rate(w, scenario.target_channel, scenario.interferer_channels, scenario.noise)
    return SearchResult(w, label, score, overhead)


def ff_hierarchical_search(geom: ArrayGeometry, scenario, levels: int = 4, beams_per_level: int = 8,
                           angle_span=DEFAULT_ANGLE_SPAN, shrink_factor: float = 2.0,
                           counter: RateCounter | None = None) -> SearchResult:
    """Angle-only search narrowing the scanned sector by ``shrink_factor`` per level."""
    if levels < 1 or beams_per_level < 1:
        raise ConfigurationError("levels and beams_per_level must be >= 1")
    lo, hi = angle_span
    result = None
    for level in range(levels):
        book = build_far_field_codebook(geom, (lo, hi), beams_per_level)
        result = select_codeword(book, scenario, counter)
        if level < levels - 1:
            width = (hi - lo) / shrink_factor
            centre = result.label.angle_rad
            lo, hi = centre - width / 2, centre + width / 2
            if lo < angle_span[0]:
                lo, hi = angle_span[0], angle_span[0] + width
            if hi > angle_span[1]:
                lo, hi = angle_span[1] - width, angle_span[1]
    return SearchResult(result.weights, result.label, result.score, levels * beams_per_level)
