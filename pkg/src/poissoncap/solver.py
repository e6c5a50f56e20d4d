"""Alternating-optimization driver and KKT optimality certification.

One outer iteration runs a block of tilted Blahut-Arimoto rounds (the
probabilities move, the multiplier is re-solved each round) followed by a
block of Armijo gradient steps (the amplitudes move, probabilities fixed),
then records the mutual information and the mean power.  The loop stops
when the mean power settles within ``tol_delta`` and the information gain
drops below a stall tolerance, after which co-located mass points are
merged; if the merge changed anything the loop re-enters so the merged
support re-converges.  The whole procedure restarts from several jittered
initializations and the best capacity wins.

The returned distribution is certified against the Kuhn-Tucker conditions
of the constrained capacity problem: with multiplier mu >= 0,

    i(x; F*) <= C + mu (x - eps)   for all x in [0, A], and
    i(x; F*)  = C + mu (x - eps)   on the support of F*,

where i is the per-amplitude information density and C its average.  The
certifier estimates mu by a least-squares fit over the support (the
equality is an exact affine relation at the optimum, so the fit residual
doubles as the equality check) and scans the inequality on a uniform
amplitude grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .amplitudes import _armijo_core, _gradient_arrays, merge_mass_points
from .ba import _ba_round_arrays, _mi_arrays, mutual_information
from .channel import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    build_transition,
    output_pmf,
)
from .exceptions import DegenerateDistributionError, InfeasibleConstraintError

__all__ = [
    "SolverConfig",
    "SolveReport",
    "KktCertificate",
    "information_density",
    "kkt_certify",
    "solve",
    "unquantized_capacity",
]

# Secondary stall test on the information gain; the mean-power test alone
# can fire while I is still moving when the constraint is slack.
_MI_STALL_TOL = 1e-9

# After the loop settles, run probability-only rounds until the information
# gain is at machine level; this pins the BA fixpoint tightly enough for
# the KKT support equalities to hold at certification tolerance.
_POLISH_MAX_ROUNDS = 400
_POLISH_TOL = 1e-13

_MAX_MERGE_PASSES = 6

# A settled low-mass point whose information density sits measurably below
# the support line is provably off the optimal support (its probability is
# decaying geometrically); deleting it just skips the tail of that decay.
_DOOMED_MAX_PROB = 5e-2
_DOOMED_DEFICIT = 5e-5


@dataclass
class SolverConfig:
    """Knobs for the alternating-optimization driver.

    ``n_initial_points`` of None picks K+1 equally spaced points (capped at
    16, which covers the supports seen up to a few hundred photons of peak
    power); ``merge_radius`` of None scales with the peak power as 1e-3 * A.
    """

    n_initial_points: int | None = None
    inner_ba_iters: int = 20
    inner_grad_iters: int = 20
    tol_delta: float = 1e-5
    max_outer: int = 100
    restarts: int = 8
    kkt_tol: float = 1e-4
    merge_radius: float | None = None
    prob_floor: float = 1e-6
    rng_seed: int = 0

    def __post_init__(self):
        counts = {
            "inner_ba_iters": self.inner_ba_iters,
            "inner_grad_iters": self.inner_grad_iters,
            "max_outer": self.max_outer,
            "restarts": self.restarts,
        }
        if self.n_initial_points is not None:
            counts["n_initial_points"] = self.n_initial_points
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a count >= 1, got {value}")
        if not (self.tol_delta > 0.0 and self.kkt_tol > 0.0 and self.prob_floor > 0.0):
            raise ValueError("tolerances must be positive")
        if self.merge_radius is not None and self.merge_radius < 0.0:
            raise ValueError("merge_radius must be >= 0")


@dataclass
class KktCertificate:
    """Numerical check of the optimality conditions on a solved distribution."""

    mu: float
    capacity: float
    max_violation: float
    support_residual: float
    grid_size: int
    passed: bool


@dataclass
class SolveReport:
    """Converged solve: capacity, distribution, multiplier, and traces."""

    capacity_nats: float
    distribution: InputDistribution
    eta: float
    iterations: int
    mi_trace: list[float] = field(repr=False)
    avg_power_trace: list[float] = field(repr=False)
    kkt: KktCertificate
    converged: bool

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / math.log(2.0)


# ---------------------------------------------------------------------------
# Information density and KKT certificate
# ---------------------------------------------------------------------------


def _information_density_many(
    xs: np.ndarray, g_r: np.ndarray, spec: ChannelSpec, quantizer: Quantizer
) -> np.ndarray:
    """i(x; F) = sum_j g(r_j|x) log(g(r_j|x)/g_r(r_j)) for each x in xs.

    Bins with zero output mass are skipped: they only arise from tail
    underflow and carry no measurable evidence.
    """
    G = build_transition(np.asarray(xs, dtype=float), spec, quantizer)
    mask = (G > 0.0) & (g_r > 0.0)[None, :]
    log_g = np.log(G, out=np.zeros_like(G), where=G > 0.0)
    log_gr = np.log(g_r, out=np.zeros_like(g_r), where=g_r > 0.0)
    return np.sum(np.where(mask, G * (log_g - log_gr[None, :]), 0.0), axis=1)


def information_density(
    x: float, dist: InputDistribution, spec: ChannelSpec, quantizer: Quantizer
) -> float:
    """Marginal information density of amplitude x against dist's output pmf."""
    G = build_transition(dist.amplitudes, spec, quantizer)
    g_r = output_pmf(G, dist)
    return float(_information_density_many(np.asarray([x]), g_r, spec, quantizer)[0])


def kkt_certify(
    dist: InputDistribution,
    eta: float,
    spec: ChannelSpec,
    quantizer: Quantizer,
    config: SolverConfig | None = None,
    grid_size: int = 1001,
) -> KktCertificate:
    """Check the optimality conditions for ``dist`` at tolerance config.kkt_tol.

    The multiplier mu is fit by least squares of i(x_s) - C against
    (x_s - eps) over the support (clamped to >= 0, and fixed to 0 when the
    mean-power constraint is slack); the inequality is scanned on a uniform
    grid over [0, A].
    """
    cfg = config if config is not None else SolverConfig()
    G = build_transition(dist.amplitudes, spec, quantizer)
    g_r = output_pmf(G, dist)
    capacity = mutual_information(dist, G)

    support = dist.probs > 0.0
    xs = dist.amplitudes[support]
    i_s = _information_density_many(xs, g_r, spec, quantizer)
    eps = spec.avg_power
    dx = xs - eps

    active = dist.mean_power >= eps - 1e-9
    if active:
        denom = float(dx @ dx)
        if denom > 0.0:
            mu = float(dx @ (i_s - capacity)) / denom
        else:
            mu = -eta  # single support point at eps: fall back on the solver's tilt
        mu = max(mu, 0.0)
    else:
        mu = 0.0

    grid = np.linspace(0.0, spec.peak_power, grid_size)
    i_grid = _information_density_many(grid, g_r, spec, quantizer)
    max_violation = float(np.max(i_grid - capacity - mu * (grid - eps)))
    support_residual = float(np.max(np.abs(i_s - capacity - mu * dx)))
    passed = max_violation <= cfg.kkt_tol and support_residual <= cfg.kkt_tol
    return KktCertificate(
        mu=mu,
        capacity=capacity,
        max_violation=max_violation,
        support_residual=support_residual,
        grid_size=grid_size,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# The alternating-optimization loop
# ---------------------------------------------------------------------------


def _ba_block(x, p, trans, spec, eta, rounds):
    """A block of tilted BA rounds at fixed amplitudes; returns (p, eta)."""
    for _ in range(rounds):
        p, eta = _ba_round_arrays(x, p, trans, spec.avg_power, spec.peak_power, eta)
    return p, eta


def _polish(x, p, trans, spec, eta):
    """Probability-only rounds until the information gain is negligible."""
    mi = _mi_arrays(p, trans)
    for _ in range(_POLISH_MAX_ROUNDS):
        p, eta = _ba_round_arrays(x, p, trans, spec.avg_power, spec.peak_power, eta)
        mi_new = _mi_arrays(p, trans)
        if abs(mi_new - mi) <= _POLISH_TOL:
            mi = mi_new
            break
        mi = mi_new
    return p, eta, mi


def _drop_doomed_points(dist, eta, spec, quantizer):
    """Delete settled low-mass points whose density sits below the support line.

    At a tilted BA fixpoint every surviving support point satisfies
    i(x_s) = C + mu (x_s - eps) with mu = -eta; a point still measurably
    below that line is shedding probability every round and cannot be part
    of the optimum, so its residual decay is skipped.
    """
    G = build_transition(dist.amplitudes, spec, quantizer)
    g_r = output_pmf(G, dist)
    capacity = mutual_information(dist, G)
    i_s = _information_density_many(dist.amplitudes, g_r, spec, quantizer)
    mu = max(0.0, -eta)
    resid = i_s - capacity - mu * (dist.amplitudes - spec.avg_power)
    doomed = (dist.probs < _DOOMED_MAX_PROB) & (resid < -_DOOMED_DEFICIT)
    if not doomed.any() or doomed.all():
        return dist
    keep = ~doomed
    probs = dist.probs[keep]
    return InputDistribution(dist.amplitudes[keep], probs / probs.sum())


def _solve_once(spec, quantizer, config, dist, merge_radius):
    """Run the AO loop (with merge fixpoint passes) from one initialization.

    The information trace records the value right after each BA block (the
    probabilities re-optimized for the current amplitudes, a feasible point
    where BA monotonicity holds); the mean-power trace records the value
    after the amplitude block, which is where the convergence test of the
    outer loop reads it.
    """
    eta = 0.0
    x = dist.amplitudes.copy()
    p = dist.probs.copy()
    mi_trace: list[float] = []
    eps_trace: list[float] = []
    converged = False

    for _merge_pass in range(_MAX_MERGE_PASSES):
        eps_prev = 0.0
        mi_prev = None
        pass_converged = False
        grad_stalls = 0
        for _k in range(config.max_outer):
            trans = build_transition(x, spec, quantizer)
            p, eta = _ba_block(x, p, trans, spec, eta, config.inner_ba_iters)
            mi = _mi_arrays(p, trans)
            mi_trace.append(mi)
            mu = -eta
            pen = mi - mu * float(np.dot(p, x))
            moved = False
            for _ in range(config.inner_grad_iters):
                grad = _gradient_arrays(x, trans, p @ trans, spec, quantizer, mu)
                x_new, trans_new, pen_new, step, _ = _armijo_core(
                    x, p, spec, quantizer, mu, grad, trans, pen
                )
                if step == 0.0:
                    break
                x, trans, pen = x_new, trans_new, pen_new
                moved = True
            grad_stalls = 0 if moved else grad_stalls + 1
            eps_k = float(np.dot(x, p))
            eps_trace.append(eps_k)
            eps_settled = abs(eps_k - eps_prev) <= config.tol_delta
            if eps_settled and mi_prev is not None and abs(mi - mi_prev) <= _MI_STALL_TOL:
                pass_converged = True
                break
            if eps_settled and grad_stalls >= 2:
                # Amplitudes cannot move; the rest is probability-only work,
                # which the polish below finishes far more cheaply.
                pass_converged = True
                break
            eps_prev, mi_prev = eps_k, mi

        # Pin the BA fixpoint on the settled amplitudes, then prune and merge.
        trans = build_transition(x, spec, quantizer)
        p, eta, mi = _polish(x, p, trans, spec, eta)
        mi_trace.append(mi)
        eps_trace.append(float(np.dot(x, p)))
        dist = InputDistribution(x, p)

        pruned = _drop_doomed_points(dist, eta, spec, quantizer)
        merged = merge_mass_points(pruned, merge_radius, config.prob_floor)
        canonical = dist.canonicalized()
        if merged.n_points == canonical.n_points and np.array_equal(
            merged.amplitudes, canonical.amplitudes
        ):
            # No structural change; keep the exact state the trace measured.
            dist = canonical
            converged = pass_converged
            break
        dist = merged
        x = dist.amplitudes.copy()
        p = dist.probs.copy()

    return dist, eta, mi_trace, eps_trace, converged


def solve(
    spec: ChannelSpec, quantizer: Quantizer, config: SolverConfig | None = None
) -> SolveReport:
    """Capacity and capacity-achieving input distribution for one quantizer.

    Starts from ``restarts`` jittered equally-spaced initializations (the
    first is unjittered), runs the alternating loop on each, and returns
    the best-capacity result together with its KKT certificate.
    """
    config = config if config is not None else SolverConfig()
    n_points = (
        config.n_initial_points
        if config.n_initial_points is not None
        else min(quantizer.n_bins + 1, 16)
    )
    merge_radius = (
        config.merge_radius if config.merge_radius is not None else 1e-3 * spec.peak_power
    )
    rng = np.random.default_rng(config.rng_seed)
    base = InputDistribution.uniform(spec, n_points)

    best = None
    last_error: Exception | None = None
    for restart in range(config.restarts):
        if restart == 0:
            dist0 = base
        else:
            jitter = rng.uniform(-0.05, 0.05, size=n_points) * spec.peak_power
            x0 = np.clip(base.amplitudes + jitter, 0.0, spec.peak_power)
            dist0 = InputDistribution(x0, base.probs.copy())
        try:
            result = _solve_once(spec, quantizer, config, dist0, merge_radius)
        except (DegenerateDistributionError, InfeasibleConstraintError) as err:
            last_error = err
            continue
        if best is None or result[2][-1] > best[2][-1]:
            best = result

    if best is None:
        raise DegenerateDistributionError(
            f"all {config.restarts} restarts collapsed ({last_error})", partial=None
        )

    dist, eta, mi_trace, eps_trace, converged = best
    cert = kkt_certify(dist, eta, spec, quantizer, config)
    return SolveReport(
        capacity_nats=mi_trace[-1],
        distribution=dist,
        eta=eta,
        iterations=len(mi_trace),
        mi_trace=mi_trace,
        avg_power_trace=eps_trace,
        kkt=cert,
        converged=converged,
    )


def unquantized_capacity(
    spec: ChannelSpec, config: SolverConfig | None = None
) -> SolveReport:
    """Reference capacity with the identity fine quantizer (one bin per count)."""
    return solve(spec, Quantizer.fine(spec), config)
