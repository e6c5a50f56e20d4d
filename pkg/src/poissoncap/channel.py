"""Poisson counting channel, threshold ADC, and the induced discrete channel.

Model: the transmitter emits a nonnegative intensity x constrained to
[0, A] in peak and to E[x] <= eps on average; the detector output y is
Poisson distributed with mean x + lam, where lam >= 0 is the dark current
of the photodetector.  A low-precision ADC maps the count into one of K
bins through integer thresholds q_1 < ... < q_{K-1}:

    bin j = {y : q_{j-1} < y <= q_j},   with q_0 = -1 and q_K = inf,

so bin 1 always contains y = 0 and the bins partition the nonnegative
integers exactly.

All pmf/CDF evaluation is done in log space (one exponentiation per term)
so that means of a few hundred photons do not overflow the factorials, and
the last bin is always the complement of a finite CDF, never a truncated
tail sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ChannelSpec",
    "Quantizer",
    "InputDistribution",
    "poisson_pmf",
    "poisson_log_pmf",
    "bin_probability",
    "build_transition",
    "output_pmf",
    "count_ceiling",
]

# Row sums of a freshly built transition matrix must sit this close to 1;
# anything worse indicates a numerics bug rather than rounding.
_ROW_SUM_TOL = 1e-9


def count_ceiling(mean: float) -> int:
    """Smallest count beyond which Poisson(mean) tail mass is negligible.

    ceil(mean + 12*sqrt(mean+1) + 30): twelve standard deviations plus a
    constant margin, so the cumulative mass up to the ceiling exceeds
    1 - 1e-12 for any mean >= 0.
    """
    return int(math.ceil(mean + 12.0 * math.sqrt(mean + 1.0) + 30.0))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpec:
    """Operating point of the channel: dark current and power constraints.

    Attributes
    ----------
    dark_current : float
        Mean dark counts per channel use (>= 0).
    peak_power : float
        Peak amplitude A (> 0); inputs live in [0, A].
    avg_power : float
        Average-power cap eps, 0 < eps <= A.
    """

    dark_current: float
    peak_power: float
    avg_power: float

    def __post_init__(self):
        if not (self.dark_current >= 0.0 and math.isfinite(self.dark_current)):
            raise ValueError(f"dark_current must be >= 0, got {self.dark_current}")
        if not (self.peak_power > 0.0 and math.isfinite(self.peak_power)):
            raise ValueError(f"peak_power must be > 0, got {self.peak_power}")
        if not (0.0 < self.avg_power <= self.peak_power):
            raise ValueError(
                f"avg_power must satisfy 0 < avg_power <= peak_power, "
                f"got {self.avg_power} (peak {self.peak_power})"
            )

    @property
    def peak_to_avg(self) -> float:
        """Peak-to-average power ratio alpha = A / eps (>= 1)."""
        return self.peak_power / self.avg_power

    @classmethod
    def from_snr_db(cls, snr_db: float, dark_current: float, alpha: float) -> "ChannelSpec":
        """Operating point from an SNR in dB: eps = 10^(snr_db/10), A = alpha*eps."""
        eps = 10.0 ** (snr_db / 10.0)
        return cls(dark_current=dark_current, peak_power=alpha * eps, avg_power=eps)


@dataclass(frozen=True)
class Quantizer:
    """Threshold ADC: strictly increasing integer count thresholds.

    ``thresholds`` holds q_1 < ... < q_{K-1} (nonnegative integers); the
    number of bins K is ``len(thresholds) + 1``.  An empty tuple is the
    one-bin quantizer that absorbs every count.
    """

    thresholds: tuple[int, ...]

    def __post_init__(self):
        qs = tuple(int(q) for q in self.thresholds)
        if any(q != t for q, t in zip(qs, self.thresholds)):
            raise ValueError("thresholds must be integers (counts are integers)")
        if any(q < 0 for q in qs):
            raise ValueError(f"thresholds must be nonnegative, got {qs}")
        if any(a >= b for a, b in zip(qs, qs[1:])):
            raise ValueError(f"thresholds must be strictly increasing, got {qs}")
        object.__setattr__(self, "thresholds", qs)

    @property
    def n_bins(self) -> int:
        return len(self.thresholds) + 1

    @classmethod
    def fine(cls, spec: ChannelSpec) -> "Quantizer":
        """Identity quantizer: one bin per count up to the count ceiling.

        Thresholds 0, 1, ..., ymax-1 give each count its own bin (the last
        bin aggregates the negligible tail), emulating an unquantized
        (infinite-precision) receiver.
        """
        ymax = count_ceiling(spec.peak_power + spec.dark_current)
        return cls(thresholds=tuple(range(ymax)))


@dataclass
class InputDistribution:
    """Discrete input: N amplitudes with probabilities.

    Amplitudes are not required to be sorted (gradient steps may reorder
    them mid-solve); ``canonicalized`` returns the sorted form.  Probability
    entries must be nonnegative and sum to 1 within 1e-12.
    """

    amplitudes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.amplitudes, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if x.ndim != 1 or p.ndim != 1 or x.shape != p.shape or x.size == 0:
            raise ValueError("amplitudes and probs must be matching 1-D arrays")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("amplitudes and probs must be finite")
        if np.any(x < 0.0):
            raise ValueError("amplitudes must be nonnegative")
        if np.any(p < -1e-12):
            raise ValueError("probabilities must be nonnegative")
        p = np.maximum(p, 0.0)
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        self.amplitudes = x
        self.probs = p

    @property
    def n_points(self) -> int:
        return self.amplitudes.size

    @property
    def mean_power(self) -> float:
        """E[x] = sum_i x_i p_i."""
        return float(np.dot(self.amplitudes, self.probs))

    def effective_size(self, prob_floor: float = 1e-6) -> int:
        """Number of mass points carrying probability >= prob_floor."""
        return int(np.sum(self.probs >= prob_floor))

    def canonicalized(self) -> "InputDistribution":
        """Copy with amplitudes sorted ascending (probabilities follow)."""
        order = np.argsort(self.amplitudes, kind="stable")
        return InputDistribution(self.amplitudes[order], self.probs[order])

    @classmethod
    def uniform(cls, spec: ChannelSpec, n_points: int) -> "InputDistribution":
        """N points equally spaced on [0, A] with probability 1/N each."""
        if n_points < 1:
            raise ValueError("need at least one mass point")
        if n_points == 1:
            x = np.array([spec.peak_power])
        else:
            x = np.linspace(0.0, spec.peak_power, n_points)
        return cls(x, np.full(n_points, 1.0 / n_points))


# ---------------------------------------------------------------------------
# Channel law
# ---------------------------------------------------------------------------


def poisson_log_pmf(mean: float, counts: np.ndarray) -> np.ndarray:
    """log Pois_mean(y) for an array of counts; -inf where the pmf is 0.

    mean = 0 is the degenerate distribution at y = 0.
    """
    if mean < 0.0 or not math.isfinite(mean):
        raise ValueError(f"Poisson mean must be finite and >= 0, got {mean}")
    y = np.asarray(counts, dtype=float)
    if mean == 0.0:
        return np.where(y == 0, 0.0, -np.inf)
    return y * math.log(mean) - mean - gammaln(y + 1.0)


def poisson_pmf(mean: float, y: int) -> float:
    """Pois_mean(y) = mean^y e^(-mean)/y!, evaluated in log space.

    Exactly 1.0 at y = 0 when mean = 0.
    """
    if y < 0:
        raise ValueError(f"count must be >= 0, got {y}")
    out = poisson_log_pmf(mean, np.asarray([y]))
    return float(np.exp(out[0]))


def _pmf_table(means: np.ndarray, max_count: int) -> np.ndarray:
    """Pois pmf over counts 0..max_count for each mean (rows)."""
    means = np.asarray(means, dtype=float)
    y = np.arange(max_count + 1, dtype=float)
    table = np.zeros((means.size, max_count + 1))
    pos = means > 0.0
    if np.any(pos):
        m = means[pos, None]
        table[pos] = np.exp(y[None, :] * np.log(m) - m - gammaln(y + 1.0)[None, :])
    # mean = 0: all mass at y = 0
    table[~pos, 0] = 1.0
    return table


def _transition_rows(amplitudes: np.ndarray, spec: ChannelSpec, quantizer: Quantizer) -> np.ndarray:
    """Rows g(r_j | x_i) for the given amplitudes, without row validation."""
    x = np.asarray(amplitudes, dtype=float)
    means = x + spec.dark_current
    if np.any(means < 0.0):
        raise ValueError("amplitudes produce negative Poisson means")
    K = quantizer.n_bins
    if K == 1:
        return np.ones((x.size, 1))
    qs = np.asarray(quantizer.thresholds, dtype=int)
    pmf = _pmf_table(means, int(qs[-1]))
    cdf_at_q = np.cumsum(pmf, axis=1)[:, qs]
    G = np.empty((x.size, K))
    G[:, 0] = cdf_at_q[:, 0]
    G[:, 1 : K - 1] = np.diff(cdf_at_q, axis=1)
    G[:, K - 1] = 1.0 - cdf_at_q[:, -1]  # complement: no tail truncation
    return np.clip(G, 0.0, 1.0)


def bin_probability(x: float, spec: ChannelSpec, quantizer: Quantizer, j: int) -> float:
    """P(quantizer output = bin j | input x), bins 1-indexed.

    Bin j sums Pois_{x+lam}(y) over q_{j-1} < y <= q_j; the last bin is
    1 minus the CDF at q_{K-1}.
    """
    if not 1 <= j <= quantizer.n_bins:
        raise ValueError(f"bin index {j} outside 1..{quantizer.n_bins}")
    if x < 0.0 or x > spec.peak_power * (1.0 + 1e-12):
        raise ValueError(f"amplitude {x} outside [0, {spec.peak_power}]")
    row = _transition_rows(np.asarray([x]), spec, quantizer)[0]
    return float(row[j - 1])


def build_transition(
    amplitudes: np.ndarray, spec: ChannelSpec, quantizer: Quantizer
) -> np.ndarray:
    """N x K transition matrix g(r_j | x_i) with validated rows.

    Each row is renormalized to sum exactly to 1; a row-sum deviation of
    1e-9 or more signals a numerics bug and raises.
    """
    x = np.asarray(amplitudes, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("amplitudes must be a nonempty 1-D array")
    if np.any(x < -1e-12) or np.any(x > spec.peak_power * (1.0 + 1e-12)):
        raise ValueError("amplitudes must lie within [0, peak_power]")
    G = _transition_rows(np.clip(x, 0.0, spec.peak_power), spec, quantizer)
    sums = G.sum(axis=1)
    if np.any(np.abs(sums - 1.0) >= _ROW_SUM_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ArithmeticError(f"transition row sum off by {worst:.3e} (numerics bug)")
    return G / sums[:, None]


def output_pmf(trans: np.ndarray, dist: InputDistribution) -> np.ndarray:
    """Output bin probabilities g_r(r_j) = sum_i p(x_i) g(r_j | x_i)."""
    G = np.asarray(trans, dtype=float)
    if G.ndim != 2 or G.shape[0] != dist.n_points:
        raise ValueError(
            f"transition shape {G.shape} does not match {dist.n_points} mass points"
        )
    return dist.probs @ G
