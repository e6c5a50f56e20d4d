"""Capacity-maximizing choice of integer quantizer thresholds.

For a 1-bit ADC the single threshold is found by exhaustive scan: every
candidate gets a full solve and the profile of (threshold, capacity) pairs
is kept.  For more bins the (K-1)-threshold grid is enumerated outright
while the combination count fits a budget; beyond that, coordinate ascent
refines one threshold at a time starting from the quantiles of the Poisson
law at the mean operating intensity eps + lam.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .channel import ChannelSpec, Quantizer, count_ceiling, poisson_log_pmf
from .solver import SolverConfig, solve

__all__ = ["ThresholdSearchResult", "search_1bit", "search_multibit"]


@dataclass
class ThresholdSearchResult:
    """Best quantizer found plus every (thresholds, capacity) pair evaluated."""

    best_quantizer: Quantizer
    best_capacity: float
    profile: list[tuple[tuple[int, ...], float]]


def _solve_capacity(spec, thresholds, config, cache):
    key = tuple(int(q) for q in thresholds)
    if key not in cache:
        cache[key] = solve(spec, Quantizer(key), config).capacity_nats
    return cache[key]


def search_1bit(
    spec: ChannelSpec, q_range, config: SolverConfig | None = None
) -> ThresholdSearchResult:
    """Exhaustive scan of the single threshold over ``q_range``.

    Each candidate is solved with the given config; ties break toward the
    smaller threshold.
    """
    qs = [int(q) for q in q_range]
    if not qs:
        raise ValueError("q_range must be nonempty")
    ceiling = count_ceiling(spec.peak_power + spec.dark_current)
    if min(qs) < 0 or max(qs) > ceiling:
        raise ValueError(f"thresholds must lie within [0, {ceiling}]")
    cfg = config if config is not None else SolverConfig()

    cache: dict[tuple[int, ...], float] = {}
    profile = []
    best_q, best_cap = None, -np.inf
    for q in qs:
        cap = _solve_capacity(spec, (q,), cfg, cache)
        profile.append(((q,), cap))
        if cap > best_cap:
            best_q, best_cap = q, cap
    return ThresholdSearchResult(
        best_quantizer=Quantizer((best_q,)), best_capacity=best_cap, profile=profile
    )


def _quantile_thresholds(spec: ChannelSpec, K: int, q_bound: int) -> tuple[int, ...]:
    """Initial thresholds at the K-quantiles of Pois(eps + lam)."""
    mean = spec.avg_power + spec.dark_current
    top = max(q_bound, K)
    cdf = np.cumsum(np.exp(poisson_log_pmf(mean, np.arange(top + 1)))) if mean > 0 else None
    qs: list[int] = []
    for j in range(1, K):
        if cdf is None:
            q = j - 1
        else:
            q = int(np.searchsorted(cdf, j / K))
        q = min(q, q_bound - 1)
        if qs and q <= qs[-1]:
            q = qs[-1] + 1
        qs.append(q)
    return tuple(qs)


def search_multibit(
    spec: ChannelSpec,
    K: int,
    q_bound: int,
    config: SolverConfig | None = None,
    budget: int = 512,
    refine: bool = True,
) -> ThresholdSearchResult:
    """Best K-bin threshold vector with candidates drawn from 0..q_bound-1.

    Enumerates all C(q_bound, K-1) strictly increasing vectors when that
    count fits the budget; otherwise runs coordinate ascent from
    quantile-spaced initial thresholds (raises if refinement is disabled).
    Deterministic for a fixed config seed.
    """
    if K < 2:
        raise ValueError("need at least two bins to place a threshold")
    if q_bound < K - 1:
        raise ValueError(f"q_bound={q_bound} cannot host {K - 1} distinct thresholds")
    cfg = config if config is not None else SolverConfig()
    cache: dict[tuple[int, ...], float] = {}
    profile: list[tuple[tuple[int, ...], float]] = []

    def evaluate(thresholds: tuple[int, ...]) -> float:
        fresh = thresholds not in cache
        cap = _solve_capacity(spec, thresholds, cfg, cache)
        if fresh:
            profile.append((thresholds, cap))
        return cap

    n_candidates = comb(q_bound, K - 1)
    if n_candidates <= budget:
        best_qs, best_cap = None, -np.inf
        for qs in combinations(range(q_bound), K - 1):
            cap = evaluate(qs)
            if cap > best_cap:
                best_qs, best_cap = qs, cap
        return ThresholdSearchResult(Quantizer(best_qs), best_cap, profile)

    if not refine:
        raise ValueError(
            f"{n_candidates} candidates exceed budget {budget} and refinement is disabled"
        )

    current = list(_quantile_thresholds(spec, K, q_bound))
    best_cap = evaluate(tuple(current))
    for _sweep in range(32):
        improved = False
        for pos in range(K - 1):
            lo = current[pos - 1] + 1 if pos > 0 else 0
            hi = current[pos + 1] - 1 if pos + 1 < K - 1 else q_bound - 1
            # doubling pattern steps keep the scan O(log range) per coordinate
            candidates = set()
            step = 1
            while current[pos] - step >= lo or current[pos] + step <= hi:
                candidates.update(
                    c for c in (current[pos] - step, current[pos] + step) if lo <= c <= hi
                )
                step *= 2
            best_c, best_here = current[pos], best_cap
            for cand in sorted(candidates):
                trial = current.copy()
                trial[pos] = cand
                cap = evaluate(tuple(trial))
                if cap > best_here:
                    best_c, best_here = cand, cap
            if best_c != current[pos]:
                current[pos] = best_c
                best_cap = best_here
                improved = True
        if not improved:
            break
    return ThresholdSearchResult(Quantizer(tuple(current)), best_cap, profile)
