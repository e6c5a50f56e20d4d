"""Tilted Blahut-Arimoto round: posterior, multiplier solve, update, MI."""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from poissoncap import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    ba_update,
    build_transition,
    mutual_information,
    newton_eta,
    output_pmf,
    posterior,
    tilted_score,
)
from poissoncap.exceptions import DegenerateDistributionError, InfeasibleConstraintError

E_M4 = 0.018315638888734180
# Frozen oracles (60-digit mpmath):
POSTERIOR_X0_R1 = 0.9820137900379084  # 1/(1 + e^-4)
MI_Z_HALF = 0.6472747250607725  # nats, p = (1/2, 1/2) on the Z channel


def z_channel(p0=0.5):
    spec = ChannelSpec(dark_current=0.0, peak_power=4.0, avg_power=4.0)
    quantizer = Quantizer((0,))
    dist = InputDistribution(np.array([0.0, 4.0]), np.array([p0, 1.0 - p0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    return spec, quantizer, dist, G


def random_channel(rng, n, k):
    """A random stochastic matrix row-normalized from positive entries."""
    G = rng.uniform(0.05, 1.0, size=(n, k))
    return G / G.sum(axis=1, keepdims=True)


def classical_ba_capacity(G, iters=8000, tol=1e-14):
    """Independent textbook Blahut-Arimoto on a fixed transition matrix.

    Written straight from the alternating form p <- p * exp(D) / Z with
    D_i = sum_j G_ij log(G_ij / (p G)_j); no code shared with the package.
    """
    n = G.shape[0]
    p = np.full(n, 1.0 / n)
    c_prev = -1.0
    for _ in range(iters):
        gy = p @ G
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(G > 0, G / np.where(gy > 0, gy, 1.0)[None, :], 1.0)
            D = np.sum(np.where(G > 0, G * np.log(ratio), 0.0), axis=1)
        w = p * np.exp(D)
        p = w / w.sum()
        cap = math.log(w.sum())
        if abs(cap - c_prev) < tol:
            break
        c_prev = cap
    gy = p @ G
    with np.errstate(divide="ignore"):
        ratio = np.where(G > 0, G / np.where(gy > 0, gy, 1.0)[None, :], 1.0)
    return float(np.sum(p[:, None] * np.where(G > 0, G * np.log(ratio), 0.0))), p


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------


def test_posterior_identity_channel():
    spec = ChannelSpec(dark_current=0.0, peak_power=1.0, avg_power=1.0)
    dist = InputDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    G = np.eye(2)
    post = posterior(G, dist)
    np.testing.assert_allclose(post.matrix, np.eye(2), atol=1e-15)


def test_posterior_single_mass_point():
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([4.0]), np.array([1.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    post = posterior(G, dist)
    np.testing.assert_allclose(post.matrix, [[1.0, 1.0]], atol=1e-15)


def test_posterior_z_channel_bayes_value():
    _, _, dist, G = z_channel()
    post = posterior(G, dist)
    assert post.matrix[0, 0] == pytest.approx(POSTERIOR_X0_R1, rel=1e-12)
    assert post.matrix[1, 0] == pytest.approx(1.0 - POSTERIOR_X0_R1, rel=1e-9)


def test_posterior_columns_sum_to_one_random():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n, k = rng.integers(2, 7), rng.integers(2, 6)
        G = random_channel(rng, n, k)
        p = rng.dirichlet(np.ones(n))
        dist = InputDistribution(np.sort(rng.uniform(0, 10, n)), p)
        post = posterior(G, dist)
        sums = post.matrix.sum(axis=0)
        np.testing.assert_allclose(sums[post.valid_cols], 1.0, atol=1e-10)
        assert np.all(post.matrix >= 0) and np.all(post.matrix <= 1 + 1e-15)


# ---------------------------------------------------------------------------
# tilted_score
# ---------------------------------------------------------------------------


def test_tilted_score_matches_direct_product():
    _, _, dist, G = z_channel()
    post = posterior(G, dist)
    scores = tilted_score(dist, G, post, 0.0)
    expected = np.array(
        [
            np.prod([post.matrix[i, j] ** G[i, j] for j in range(2)])
            for i in range(2)
        ]
    )
    np.testing.assert_allclose(scores, expected, rtol=1e-12)


def test_tilted_score_single_point():
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([2.0]), np.array([1.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    post = posterior(G, dist)
    for eta in (-0.5, 0.0, 0.7):
        np.testing.assert_allclose(
            tilted_score(dist, G, post, eta), [math.exp(eta * 2.0)], rtol=1e-13
        )


def test_tilted_score_unreachable_point_is_zero():
    # second point has zero probability, so its posterior row is zero while
    # its transition row is not: the score must collapse to 0
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([0.0, 4.0]), np.array([1.0, 0.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    post = posterior(G, dist)
    scores = tilted_score(dist, G, post, 0.0)
    assert scores[1] == 0.0
    assert scores[0] > 0.0


# ---------------------------------------------------------------------------
# newton_eta
# ---------------------------------------------------------------------------


def test_eta_inactive_single_point_at_eps():
    spec = ChannelSpec(dark_current=0.0, peak_power=4.0, avg_power=2.0)
    quantizer = Quantizer((0,))
    dist = InputDistribution(np.array([2.0]), np.array([1.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    state = newton_eta(dist.amplitudes, G, posterior(G, dist), spec)
    assert state.eta == 0.0 and not state.active


def test_eta_inactive_all_points_below_eps():
    spec = ChannelSpec(dark_current=1.0, peak_power=10.0, avg_power=8.0)
    quantizer = Quantizer((2, 5))
    dist = InputDistribution(np.array([0.5, 1.0, 2.0]), np.full(3, 1 / 3))
    G = build_transition(dist.amplitudes, spec, quantizer)
    state = newton_eta(dist.amplitudes, G, posterior(G, dist), spec)
    assert state.eta == 0.0 and not state.active


def test_eta_root_matches_brentq_oracle():
    # support {0, A} with A = 4 eps: the constraint binds from a balanced start
    spec = ChannelSpec(dark_current=0.5, peak_power=8.0, avg_power=2.0)
    quantizer = Quantizer((1, 4))
    dist = InputDistribution(np.array([0.0, 8.0]), np.array([0.5, 0.5]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    post = posterior(G, dist)
    state = newton_eta(dist.amplitudes, G, post, spec)
    assert state.active
    assert abs(state.residual) <= 1e-10

    # oracle: f built from first principles, root by brentq
    x = dist.amplitudes
    c = np.array(
        [np.prod([post.matrix[i, j] ** G[i, j] for j in range(G.shape[1])]) for i in range(2)]
    )

    def f(eta):
        return float(np.sum(np.exp(eta * x) * (1.0 - x / spec.avg_power) * c))

    root = brentq(f, -50.0, 0.0, xtol=1e-14)
    assert state.eta == pytest.approx(root, abs=1e-9)


def test_eta_residual_small_on_random_binding_fixtures():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = rng.integers(2, 6)
        peak = rng.uniform(4.0, 20.0)
        spec = ChannelSpec(dark_current=rng.uniform(0, 3), peak_power=peak, avg_power=peak / 4)
        quantizer = Quantizer((1, 3, 8))
        x = np.sort(rng.uniform(0.0, peak, n))
        x[0] = 0.0  # keep the constraint satisfiable
        dist = InputDistribution(x, rng.dirichlet(np.ones(n)))
        G = build_transition(x, spec, quantizer)
        state = newton_eta(x, G, posterior(G, dist), spec)
        if state.active:
            assert abs(state.residual) <= 1e-10
            assert state.eta < 0.0


def test_eta_infeasible_support_raises():
    spec = ChannelSpec(dark_current=0.0, peak_power=10.0, avg_power=1.0)
    quantizer = Quantizer((2,))
    dist = InputDistribution(np.array([5.0, 10.0]), np.array([0.5, 0.5]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    with pytest.raises(InfeasibleConstraintError):
        newton_eta(dist.amplitudes, G, posterior(G, dist), spec)


# ---------------------------------------------------------------------------
# ba_update
# ---------------------------------------------------------------------------


def test_update_symmetric_channel_fixpoint():
    spec = ChannelSpec(dark_current=0.0, peak_power=1.0, avg_power=1.0)
    dist = InputDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    G = np.array([[0.8, 0.2], [0.2, 0.8]])
    new = ba_update(dist, G, posterior(G, dist), 0.0)
    np.testing.assert_allclose(new.probs, [0.5, 0.5], atol=1e-15)


def test_update_kills_unreachable_point():
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([0.0, 4.0]), np.array([1.0, 0.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    new = ba_update(dist, G, posterior(G, dist), 0.0)
    np.testing.assert_allclose(new.probs, [1.0, 0.0], atol=1e-15)


def test_update_one_round_matches_classical_formula():
    _, _, dist, G = z_channel()
    new = ba_update(dist, G, posterior(G, dist), 0.0)
    # classical BA update computed independently: p_i' ~ p_i exp(D_i)
    gy = dist.probs @ G
    D = np.sum(
        np.where(G > 0, G * np.log(np.where(G > 0, G, 1.0) / gy[None, :]), 0.0), axis=1
    )
    w = dist.probs * np.exp(D)
    np.testing.assert_allclose(new.probs, w / w.sum(), rtol=1e-12)


def test_update_degenerate_raises():
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([0.0, 4.0]), np.array([0.5, 0.5]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    post = posterior(G, dist)
    post.matrix[:] = 0.0  # simulate a collapsed posterior
    with pytest.raises(DegenerateDistributionError):
        ba_update(dist, G, post, 0.0)


def test_ba_monotone_in_mutual_information():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n, k = rng.integers(2, 7), rng.integers(2, 6)
        G = random_channel(rng, n, k)
        p = rng.dirichlet(np.ones(n))
        dist = InputDistribution(np.sort(rng.uniform(0, 10, n)), p)
        mi = mutual_information(dist, G)
        for _ in range(5):
            dist = ba_update(dist, G, posterior(G, dist), 0.0)
            mi_new = mutual_information(dist, G)
            assert mi_new >= mi - 1e-12
            mi = mi_new


def test_tilted_update_respects_mean_constraint():
    rng = np.random.default_rng(23)
    for _ in range(20):
        peak = rng.uniform(4.0, 16.0)
        spec = ChannelSpec(dark_current=1.0, peak_power=peak, avg_power=peak / 4)
        quantizer = Quantizer((1, 4))
        x = np.sort(rng.uniform(0, peak, 4))
        x[0] = 0.0
        dist = InputDistribution(x, rng.dirichlet(np.ones(4)))
        G = build_transition(x, spec, quantizer)
        post = posterior(G, dist)
        state = newton_eta(x, G, post, spec)
        new = ba_update(dist, G, post, state.eta)
        assert new.mean_power <= spec.avg_power + 1e-8


# ---------------------------------------------------------------------------
# mutual_information
# ---------------------------------------------------------------------------


def test_mi_noiseless_binary():
    dist = InputDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    assert mutual_information(dist, np.eye(2)) == pytest.approx(math.log(2), rel=1e-12)


def test_mi_single_point_is_zero():
    spec, quantizer, _, _ = z_channel()
    dist = InputDistribution(np.array([4.0]), np.array([1.0]))
    G = build_transition(dist.amplitudes, spec, quantizer)
    assert mutual_information(dist, G) == 0.0


def test_mi_z_channel_against_double_sum_oracle():
    _, _, dist, G = z_channel()
    assert mutual_information(dist, G) == pytest.approx(MI_Z_HALF, rel=1e-12)


def test_mi_bounds_random():
    rng = np.random.default_rng(29)
    for _ in range(40):
        n, k = rng.integers(2, 7), rng.integers(2, 7)
        G = random_channel(rng, n, k)
        dist = InputDistribution(np.sort(rng.uniform(0, 5, n)), rng.dirichlet(np.ones(n)))
        mi = mutual_information(dist, G)
        assert 0.0 <= mi <= min(math.log(n), math.log(k)) + 1e-12


def test_mi_monotone_under_quantizer_refinement():
    spec = ChannelSpec(dark_current=2.0, peak_power=10.0, avg_power=10.0)
    dist = InputDistribution(np.array([0.0, 4.0, 10.0]), np.array([0.5, 0.2, 0.3]))
    chain = [Quantizer((4,)), Quantizer((2, 4)), Quantizer((2, 4, 7)),
             Quantizer((1, 2, 4, 7, 12)), Quantizer.fine(spec)]
    values = []
    for quantizer in chain:
        G = build_transition(dist.amplitudes, spec, quantizer)
        values.append(mutual_information(dist, G))
    diffs = np.diff(values)
    assert np.all(diffs >= -1e-12)


def test_fixpoint_matches_classical_ba_capacity():
    rng = np.random.default_rng(31)
    G = random_channel(rng, 4, 3)
    dist = InputDistribution(np.arange(4.0), np.full(4, 0.25))
    for _ in range(4000):
        dist = ba_update(dist, G, posterior(G, dist), 0.0)
    ours = mutual_information(dist, G)
    oracle, _ = classical_ba_capacity(G)
    assert ours == pytest.approx(oracle, abs=1e-9)
