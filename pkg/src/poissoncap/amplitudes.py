"""Gradient ascent on mass-point amplitudes with Armijo backtracking.

The objective per point is the information density against the current
output pmf minus a power penalty,

    sum_j g(r_j | x_i) log(g(r_j | x_i) / g_r(r_j)) - eta * x_i,

with g_r held fixed: because the row derivatives of the transition matrix
sum to zero, freezing g_r gives the exact (envelope) derivative of the
mutual information, not an approximation.  The line search accepts steps
on the same penalized objective; when the power constraint binds, the
optimal high-amplitude points must move DOWN (raw information drops, the
freed power is worth more), and a test on plain mutual information would
deadlock there.

The per-bin derivative telescopes.  d/dmean CDF(t; mean) = -pmf(t; mean),
so with bins (q_{j-1}, q_j] the derivative of a bin probability is

    d g_j / dx = pmf(q_{j-1}; x+lam) - pmf(q_j; x+lam)

with pmf(-1) := 0 and pmf(inf) := 0.  This is exact, sums to zero across
bins by construction, and covers the mean -> 0 limit through
pmf(y; 0) = [y == 0].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .channel import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    build_transition,
)
from .ba import _mi_arrays, mutual_information
from .exceptions import DegenerateDistributionError

__all__ = [
    "GradientReport",
    "transition_derivative",
    "amplitude_gradient",
    "armijo_ascent",
    "merge_mass_points",
]

ARMIJO_TOL = 1e-4
ARMIJO_BACKTRACK = 0.5
ARMIJO_MAX_BACKTRACKS = 30


def _derivative_rows(
    amplitudes: np.ndarray, spec: ChannelSpec, quantizer: Quantizer
) -> np.ndarray:
    """d g(r_j | x_i) / dx for every point and bin (N x K)."""
    x = np.asarray(amplitudes, dtype=float)
    K = quantizer.n_bins
    if K == 1:
        return np.zeros((x.size, 1))
    qs = np.asarray(quantizer.thresholds, dtype=float)
    means = x + spec.dark_current
    pmf_q = np.zeros((x.size, qs.size))
    pos = means > 0.0
    if np.any(pos):
        m = means[pos, None]
        pmf_q[pos] = np.exp(qs[None, :] * np.log(m) - m - gammaln(qs + 1.0)[None, :])
    pmf_q[~pos] = (qs == 0).astype(float)[None, :]
    D = np.empty((x.size, K))
    D[:, 0] = -pmf_q[:, 0]
    D[:, 1 : K - 1] = pmf_q[:, : K - 2] - pmf_q[:, 1 : K - 1]
    D[:, K - 1] = pmf_q[:, K - 2]
    return D


def transition_derivative(
    x: float, spec: ChannelSpec, quantizer: Quantizer, j: int
) -> float:
    """d/dx of the bin-j probability at amplitude x (bins 1-indexed)."""
    if not 1 <= j <= quantizer.n_bins:
        raise ValueError(f"bin index {j} outside 1..{quantizer.n_bins}")
    row = _derivative_rows(np.asarray([x]), spec, quantizer)[0]
    return float(row[j - 1])


def _gradient_arrays(x, G, g_r, spec, quantizer, eta: float) -> np.ndarray:
    D = _derivative_rows(x, spec, quantizer)
    mask = (G > 0.0) & (g_r > 0.0)[None, :]
    log_g = np.log(G, out=np.zeros_like(G), where=G > 0.0)
    log_gr = np.log(g_r, out=np.zeros_like(g_r), where=g_r > 0.0)
    terms = np.where(mask, D * (log_g - log_gr[None, :] + 1.0), 0.0)
    return terms.sum(axis=1) - eta


def amplitude_gradient(
    dist: InputDistribution,
    trans: np.ndarray,
    out_pmf: np.ndarray,
    spec: ChannelSpec,
    quantizer: Quantizer,
    eta: float,
) -> np.ndarray:
    """Ascent direction per point: sum_j dg_ij (log(g_ij/g_r_j) + 1) - eta.

    Bins where g_ij vanishes are skipped (the matching derivative vanishes
    there too, up to underflow); bins with empty output mass likewise.
    """
    G = np.asarray(trans, dtype=float)
    g_r = np.asarray(out_pmf, dtype=float)
    return _gradient_arrays(dist.amplitudes, G, g_r, spec, quantizer, eta)


@dataclass
class GradientReport:
    """One Armijo step: direction, accepted step size, and objective move."""

    grad: np.ndarray
    step: float
    armijo_backtracks: int
    objective_before: float
    objective_after: float


def _armijo_core(x0, probs, spec, quantizer, eta, grad, trans0=None, pen0=None):
    """Backtracking line search; returns (x, trans, penalized_obj, step, backtracks).

    The objective is the penalized mutual information

        L(x) = I(x; p fixed) - eta * sum_i p_i x_i,

    the function whose gradient the ascent direction actually is; with a
    binding power constraint the optimal move can trade raw information for
    constraint slack, which a test on I alone would veto.  At eta = 0 this
    is plain mutual information.  ``trans0``/``pen0`` may carry the
    already-built transition and objective at ``x0`` so a driver loop does
    not rebuild them every step.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient must be finite")
    if trans0 is None:
        trans0 = build_transition(x0, spec, quantizer)
    if pen0 is None:
        pen0 = _mi_arrays(probs, trans0) - eta * float(np.dot(probs, x0))
    # components pinned at the box edges cannot move; counting them in the
    # required-gain norm would deadlock the points that still can
    pinned = ((x0 <= 0.0) & (grad < 0.0)) | ((x0 >= spec.peak_power) & (grad > 0.0))
    gnorm2 = float(np.sum(np.where(pinned, 0.0, grad) ** 2))
    if gnorm2 == 0.0:
        return x0.copy(), trans0, pen0, 0.0, 0

    step = 1.0
    for backtracks in range(ARMIJO_MAX_BACKTRACKS + 1):
        candidate = np.clip(x0 + step * grad, 0.0, spec.peak_power)
        trans1 = build_transition(candidate, spec, quantizer)
        pen1 = _mi_arrays(probs, trans1) - eta * float(np.dot(probs, candidate))
        if pen1 >= pen0 + ARMIJO_TOL * step * gnorm2:
            return candidate, trans1, pen1, step, backtracks
        step *= ARMIJO_BACKTRACK
    return x0.copy(), trans0, pen0, 0.0, ARMIJO_MAX_BACKTRACKS


def armijo_ascent(
    dist: InputDistribution,
    spec: ChannelSpec,
    quantizer: Quantizer,
    eta: float,
    grad: np.ndarray,
) -> tuple[np.ndarray, GradientReport]:
    """Backtracking step along ``grad`` with projection onto [0, A].

    Starts at step 1 and halves until the penalized objective
    I - eta * E[x] (recomputed with a fresh transition matrix at the
    candidate amplitudes) gains at least ARMIJO_TOL * step * ||grad||^2;
    gives up after 30 backtracks and reports a zero step.  The report's
    objective fields carry the penalized objective, which is the mutual
    information itself whenever eta = 0.
    """
    grad = np.asarray(grad, dtype=float)
    trans0 = build_transition(dist.amplitudes, spec, quantizer)
    pen0 = mutual_information(dist, trans0) - eta * dist.mean_power
    x_new, _, pen1, step, backtracks = _armijo_core(
        dist.amplitudes, dist.probs, spec, quantizer, eta, grad, trans0, pen0
    )
    return x_new, GradientReport(grad, step, backtracks, pen0, pen1)


def merge_mass_points(
    dist: InputDistribution, merge_radius: float, prob_floor: float
) -> InputDistribution:
    """Merge co-located points and drop negligible ones.

    Points closer than ``merge_radius`` collapse (transitively) into one
    point at their probability-weighted mean with the summed probability;
    points below ``prob_floor`` are then deleted and the rest renormalized.
    The result is sorted with strictly increasing amplitudes.
    """
    order = np.argsort(dist.amplitudes, kind="stable")
    x = dist.amplitudes[order]
    p = dist.probs[order]

    locations: list[float] = []
    masses: list[float] = []
    start = 0
    for i in range(1, x.size + 1):
        if i < x.size and (x[i] - x[i - 1]) < merge_radius:
            continue
        cx, cp = x[start:i], p[start:i]
        mass = float(cp.sum())
        loc = float(np.dot(cx, cp) / mass) if mass > 0.0 else float(cx.mean())
        locations.append(loc)
        masses.append(mass)
        start = i

    xs = np.asarray(locations)
    ps = np.asarray(masses)
    keep = ps >= prob_floor
    if not np.any(keep):
        raise DegenerateDistributionError("every mass point fell below the floor")
    xs, ps = xs[keep], ps[keep]
    return InputDistribution(xs, ps / ps.sum())
