"""Tilted Blahut-Arimoto round for fixed mass-point amplitudes.

For fixed amplitudes the capacity problem over the probabilities alone is
concave, and alternating the Bayes posterior with the input-distribution
update climbs to its maximum.  The average-power cap enters as an
exponential tilt on the update: each point gets the score

    t_i = exp(eta * x_i) * prod_j P(x_i | r_j) ^ g(r_j | x_i)

and the new probabilities are t_i / sum(t).  The multiplier eta is chosen
as the root of

    f(eta) = sum_i exp(eta x_i) (1 - x_i / eps) prod_j P(x_i|r_j)^g(r_j|x_i),

which factors as (sum of scores) * (1 - updated_mean / eps): the root makes
the updated distribution's mean exactly eps.  When the untilted update is
already feasible the multiplier is zero.  Because the score mean increases
with eta, a binding constraint always yields a negative root (the tilt must
suppress large amplitudes); -eta is then the usual nonnegative KKT
multiplier of the average-power constraint.

The root is found by Newton-Raphson, warm-started from the previous round,
with a bracketing/bisection fallback when Newton leaves a sane range.  All
score arithmetic is done in log space with a single max-shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec, InputDistribution, output_pmf
from .exceptions import DegenerateDistributionError, InfeasibleConstraintError

__all__ = [
    "Posterior",
    "EtaState",
    "posterior",
    "tilted_score",
    "newton_eta",
    "ba_update",
    "mutual_information",
]

_NEWTON_TOL = 1e-10
_NEWTON_MAX_ITERS = 50
_ETA_DIVERGED = 1e3


@dataclass
class Posterior:
    """Bayes posterior P(x_i | r_j), with a validity mask for empty bins.

    ``matrix`` is N x K; columns where the output pmf vanishes are all-zero
    and flagged invalid (they carry no evidence and are excluded from the
    score products).
    """

    matrix: np.ndarray
    valid_cols: np.ndarray


# ---------------------------------------------------------------------------
# Array-level core (shared by the public ops and the solver's hot loop)
# ---------------------------------------------------------------------------


def _posterior_arrays(G: np.ndarray, p: np.ndarray):
    g_r = p @ G
    valid = g_r > 0.0
    P = np.zeros_like(G)
    P[:, valid] = p[:, None] * G[:, valid] / g_r[valid][None, :]
    return P, valid, g_r


def _log_scores_arrays(x, G, P, valid, eta: float) -> np.ndarray:
    """log t_i = eta*x_i + sum_j g_ij log P_ij; -inf marks unreachable points.

    Bins with g_ij = 0 contribute nothing (0*log 0 := 0) and invalid
    columns are excluded; P_ij = 0 against g_ij > 0 drives the score to 0.
    """
    active = (G > 0.0) & valid[None, :]
    logP = np.log(P, out=np.full_like(P, -np.inf), where=P > 0.0)
    with np.errstate(invalid="ignore"):
        contrib = np.where(active, G * logP, 0.0)
    return eta * x + contrib.sum(axis=1)


def _mi_arrays(p: np.ndarray, G: np.ndarray, g_r: np.ndarray | None = None) -> float:
    if g_r is None:
        g_r = p @ G
    terms = p[:, None] * G
    mask = terms > 0.0
    log_g = np.log(G, out=np.zeros_like(G), where=G > 0.0)
    log_gr = np.log(g_r, out=np.zeros_like(g_r), where=g_r > 0.0)
    return float(np.sum(terms * np.where(mask, log_g - log_gr[None, :], 0.0)))


def _f_scaled(eta: float, x: np.ndarray, logc: np.ndarray, eps: float):
    """f(eta) split as (value, derivative, shift, mass): f = value * exp(shift).

    ``mass`` is the shifted score total, so value / mass = 1 - mean/eps.
    Working with max-shifted exponentials keeps transiently large eta from
    overflowing; the shift cancels in the Newton step f / f'.
    """
    s = eta * x + logc
    shift = float(np.max(s))
    if not np.isfinite(shift):
        return 0.0, 0.0, shift, 0.0
    u = np.exp(s - shift)
    w = 1.0 - x / eps
    return float(np.sum(u * w)), float(np.sum(x * u * w)), shift, float(np.sum(u))


def _newton_eta_arrays(x: np.ndarray, logc: np.ndarray, eps: float, peak: float, eta0: float):
    """Root of f(eta); returns (eta, iterations, residual, active)."""
    if not np.any(np.isfinite(logc)):
        raise DegenerateDistributionError("all tilted scores vanished")

    def residual_at(eta: float) -> float:
        val, _, shift, _ = _f_scaled(eta, x, logc, eps)
        return val * np.exp(min(shift, 700.0))

    def converged(val: float, shift: float, mass: float) -> bool:
        # |f| = |val| * e^shift <= tol, tested in logs to dodge overflow.
        # The relative test |val|/mass = |1 - mean/eps| rejects the false
        # convergence of the vanishing tail f -> 0- as eta -> -inf, which
        # has no root at all.
        if mass <= 0.0:
            return False
        if abs(val) / mass > 1e-9:
            return False
        if val == 0.0:
            return True
        return np.log(abs(val)) + shift <= np.log(_NEWTON_TOL)

    u0 = np.exp(logc - np.max(logc[np.isfinite(logc)]))
    mean0 = float(np.dot(x, u0) / np.sum(u0))
    if mean0 <= eps:
        return 0.0, 0, residual_at(0.0), False

    eta = float(eta0)
    diverged = False
    for it in range(1, _NEWTON_MAX_ITERS + 1):
        val, dval, shift, mass = _f_scaled(eta, x, logc, eps)
        if converged(val, shift, mass):
            return eta, it - 1, val * np.exp(shift), True
        if dval == 0.0 or not np.isfinite(val) or not np.isfinite(dval):
            diverged = True
            break
        eta = eta - val / dval
        if not np.isfinite(eta) or abs(eta) > _ETA_DIVERGED:
            diverged = True
            break
    if not diverged:
        val, _, shift, mass = _f_scaled(eta, x, logc, eps)
        if converged(val, shift, mass):
            return eta, _NEWTON_MAX_ITERS, val * np.exp(shift), True

    # Bisection fallback.  f(0) < 0 here (mean0 > eps); scores concentrate
    # on the smallest amplitudes as eta -> -inf, so a feasible support
    # brackets a root on the negative axis.  Bracketing decisions use the
    # sign of the max-shifted value: the absolute f underflows to -0.0 at
    # extreme eta and would fake a sign change.
    def scaled_value(eta: float) -> float:
        val, _, _, _ = _f_scaled(eta, x, logc, eps)
        return val

    hi = 0.0
    val_hi = scaled_value(hi)
    if val_hi == 0.0:
        return hi, _NEWTON_MAX_ITERS, 0.0, True
    lo = -1.0 / max(peak, 1.0)
    val_lo = scaled_value(lo)
    expansions = 0
    while val_lo < 0.0 and expansions < 80:
        lo *= 2.0
        val_lo = scaled_value(lo)
        expansions += 1
    if val_lo < 0.0:
        raise InfeasibleConstraintError(
            "average-power constraint cannot be met on the current support"
        )
    iters = _NEWTON_MAX_ITERS
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val, _, shift, mass = _f_scaled(mid, x, logc, eps)
        iters += 1
        if converged(val, shift, mass) or (hi - lo) <= np.finfo(float).eps * max(1.0, abs(lo)):
            return mid, iters, val * np.exp(min(shift, 700.0)), True
        if val > 0.0:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return mid, iters, residual_at(mid), True


def _ba_round_arrays(x, p, G, eps, peak, eta):
    """posterior -> eta root -> tilted update; returns (p_new, eta)."""
    P, valid, _ = _posterior_arrays(G, p)
    logc = _log_scores_arrays(x, G, P, valid, 0.0)
    eta, _, _, _ = _newton_eta_arrays(x, logc, eps, peak, eta)
    s = eta * x + logc
    finite = np.isfinite(s)
    if not np.any(finite):
        raise DegenerateDistributionError("all tilted scores are zero")
    t = np.exp(s - np.max(s[finite]))
    return t / t.sum(), eta


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def posterior(trans: np.ndarray, dist: InputDistribution) -> Posterior:
    """P(x_i | r_j) = p(x_i) g(r_j|x_i) / g_r(r_j) for nonempty bins."""
    G = np.asarray(trans, dtype=float)
    if G.ndim != 2 or G.shape[0] != dist.n_points:
        raise ValueError(f"transition shape {G.shape} does not match the distribution")
    P, valid, _ = _posterior_arrays(G, dist.probs)
    return Posterior(matrix=P, valid_cols=valid)


def tilted_score(
    dist: InputDistribution, trans: np.ndarray, post: Posterior, eta: float
) -> np.ndarray:
    """Scores t_i = exp(eta x_i) prod_j P(x_i|r_j)^g(r_j|x_i)."""
    G = np.asarray(trans, dtype=float)
    return np.exp(_log_scores_arrays(dist.amplitudes, G, post.matrix, post.valid_cols, eta))


@dataclass
class EtaState:
    """Outcome of the average-power multiplier solve.

    ``residual`` is the constraint function f(eta) at the returned value;
    when ``active`` is False the constraint is slack and eta is 0.
    """

    eta: float
    newton_iters: int
    residual: float
    active: bool


def newton_eta(
    amplitudes: np.ndarray,
    trans: np.ndarray,
    post: Posterior,
    spec: ChannelSpec,
    eta0: float = 0.0,
) -> EtaState:
    """Solve f(eta) = 0 for the average-power multiplier.

    Checks the constraint at eta = 0 first: if the untilted update already
    has mean <= eps the multiplier is inactive.  Otherwise Newton-Raphson
    from ``eta0`` (warm start), falling back to bracketed bisection if the
    iteration diverges.  Raises InfeasibleConstraintError when no root can
    bracket (every surviving point sits above eps).
    """
    x = np.asarray(amplitudes, dtype=float)
    G = np.asarray(trans, dtype=float)
    logc = _log_scores_arrays(x, G, post.matrix, post.valid_cols, 0.0)
    eta, iters, residual, active = _newton_eta_arrays(
        x, logc, spec.avg_power, spec.peak_power, eta0
    )
    return EtaState(eta=eta, newton_iters=iters, residual=residual, active=active)


def ba_update(
    dist: InputDistribution, trans: np.ndarray, post: Posterior, eta: float
) -> InputDistribution:
    """One tilted input-distribution update: p_i <- t_i / sum(t)."""
    G = np.asarray(trans, dtype=float)
    s = _log_scores_arrays(dist.amplitudes, G, post.matrix, post.valid_cols, eta)
    finite = np.isfinite(s)
    if not np.any(finite):
        raise DegenerateDistributionError("all tilted scores are zero")
    t = np.exp(s - np.max(s[finite]))
    return InputDistribution(dist.amplitudes, t / t.sum())


def mutual_information(dist: InputDistribution, trans: np.ndarray) -> float:
    """I(x; r) = sum_ij p_i g_ij log(g_ij / g_r_j) in nats (0 log 0 := 0)."""
    G = np.asarray(trans, dtype=float)
    g_r = output_pmf(G, dist)
    return _mi_arrays(dist.probs, G, g_r)
