"""Driver loop, KKT certification, determinism, and reference solves."""

import math

import numpy as np
import pytest

from poissoncap import (
    ChannelSpec,
    InputDistribution,
    Quantizer,
    SolverConfig,
    ba_update,
    build_transition,
    information_density,
    kkt_certify,
    mutual_information,
    newton_eta,
    posterior,
    solve,
    unquantized_capacity,
)

# Frozen oracle (60-digit mpmath): information density of the off-support
# amplitude x = 2 against the half/half Z-channel output pmf.
IDENSITY_X2_Z = 0.31027011573342713


def z_fixture():
    spec = ChannelSpec(dark_current=0.0, peak_power=4.0, avg_power=4.0)
    quantizer = Quantizer((0,))
    dist = InputDistribution(np.array([0.0, 4.0]), np.array([0.5, 0.5]))
    return spec, quantizer, dist


@pytest.fixture(scope="module")
def solved_1bit_5db():
    spec = ChannelSpec.from_snr_db(5.0, 3.0, 4.0)
    quantizer = Quantizer((7,))
    config = SolverConfig(restarts=2, rng_seed=0)
    return spec, quantizer, config, solve(spec, quantizer, config)


def grid_ba_capacity(spec, quantizer, n_grid=300, rounds=4000, tol=1e-13):
    """Tilted BA on a dense fixed amplitude grid: an independent reference.

    No amplitude optimization at all; capacity is limited only by the grid
    resolution, which at 300 points is far inside the comparison tolerance.
    """
    x = np.linspace(0.0, spec.peak_power, n_grid)
    dist = InputDistribution(x, np.full(n_grid, 1.0 / n_grid))
    G = build_transition(x, spec, quantizer)
    eta = 0.0
    prev = -1.0
    for r in range(rounds):
        post = posterior(G, dist)
        eta = newton_eta(x, G, post, spec, eta).eta
        dist = ba_update(dist, G, post, eta)
        if r % 25 == 0:
            mi = mutual_information(dist, G)
            if abs(mi - prev) < tol:
                break
            prev = mi
    return mutual_information(dist, G)


# ---------------------------------------------------------------------------
# information_density
# ---------------------------------------------------------------------------


def test_density_zero_at_single_support_point():
    spec, quantizer, _ = z_fixture()
    dist = InputDistribution(np.array([4.0]), np.array([1.0]))
    assert information_density(4.0, dist, spec, quantizer) == pytest.approx(0.0, abs=1e-15)


def test_density_average_equals_mutual_information():
    spec, quantizer, dist = z_fixture()
    G = build_transition(dist.amplitudes, spec, quantizer)
    avg = sum(
        p * information_density(x, dist, spec, quantizer)
        for x, p in zip(dist.amplitudes, dist.probs)
    )
    assert avg == pytest.approx(mutual_information(dist, G), abs=1e-12)


def test_density_off_support_against_oracle():
    spec, quantizer, dist = z_fixture()
    got = information_density(2.0, dist, spec, quantizer)
    assert got == pytest.approx(IDENSITY_X2_Z, rel=1e-12)


# ---------------------------------------------------------------------------
# kkt_certify
# ---------------------------------------------------------------------------


def test_kkt_single_bin_trivially_passes():
    spec = ChannelSpec(dark_current=1.0, peak_power=6.0, avg_power=2.0)
    quantizer = Quantizer(())
    dist = InputDistribution(np.array([0.0, 2.0]), np.array([0.5, 0.5]))
    cert = kkt_certify(dist, 0.0, spec, quantizer)
    assert cert.passed
    assert cert.mu == 0.0
    assert cert.capacity == pytest.approx(0.0, abs=1e-15)


def test_kkt_converged_solve_passes(solved_1bit_5db):
    spec, quantizer, config, report = solved_1bit_5db
    assert report.kkt.passed
    assert report.kkt.max_violation <= config.kkt_tol
    assert report.kkt.support_residual <= config.kkt_tol
    assert report.kkt.mu >= 0.0
    # the certificate multiplier is the negated solver tilt at the optimum
    assert report.kkt.mu == pytest.approx(-report.eta, rel=1e-6)


def test_kkt_perturbed_distribution_fails(solved_1bit_5db):
    spec, quantizer, config, report = solved_1bit_5db
    dist = report.distribution
    probs = dist.probs.copy()
    hi, lo = int(np.argmax(probs)), int(np.argmin(probs))
    probs[hi] -= 0.05
    probs[lo] += 0.05
    perturbed = InputDistribution(dist.amplitudes, probs)
    cert = kkt_certify(perturbed, report.eta, spec, quantizer, config)
    assert not cert.passed
    assert cert.support_residual > config.kkt_tol


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_single_bin_zero_capacity():
    spec = ChannelSpec(dark_current=1.0, peak_power=4.0, avg_power=2.0)
    report = solve(spec, Quantizer(()), SolverConfig(restarts=1, rng_seed=0))
    assert report.capacity_nats == pytest.approx(0.0, abs=1e-12)
    assert report.kkt.passed


def test_solve_deterministic_per_seed():
    spec = ChannelSpec.from_snr_db(3.0, 1.0, 2.0)
    quantizer = Quantizer((2,))
    config = SolverConfig(restarts=3, rng_seed=42)
    a = solve(spec, quantizer, config)
    b = solve(spec, quantizer, config)
    assert a.capacity_nats == b.capacity_nats
    assert a.eta == b.eta
    np.testing.assert_array_equal(a.distribution.amplitudes, b.distribution.amplitudes)
    np.testing.assert_array_equal(a.distribution.probs, b.distribution.probs)
    assert a.mi_trace == b.mi_trace
    assert a.avg_power_trace == b.avg_power_trace
    assert a.kkt == b.kkt


def test_solve_report_consistency(solved_1bit_5db):
    spec, quantizer, config, report = solved_1bit_5db
    assert report.capacity_nats == report.mi_trace[-1]
    assert report.iterations == len(report.mi_trace)
    assert len(report.avg_power_trace) == len(report.mi_trace)
    diffs = np.diff(report.mi_trace)
    assert np.all(diffs >= -1e-10)
    dist = report.distribution
    assert dist.mean_power <= spec.avg_power + 1e-6
    assert np.all(dist.amplitudes >= 0.0)
    assert np.all(dist.amplitudes <= spec.peak_power)
    assert np.all(np.diff(dist.amplitudes) > 0)
    assert report.capacity_nats <= math.log(quantizer.n_bins) + 1e-12
    assert report.capacity_bits == pytest.approx(report.capacity_nats / math.log(2), rel=1e-15)


def test_solve_capacity_recomputes_from_distribution(solved_1bit_5db):
    spec, quantizer, _, report = solved_1bit_5db
    G = build_transition(report.distribution.amplitudes, spec, quantizer)
    assert mutual_information(report.distribution, G) == pytest.approx(
        report.capacity_nats, abs=1e-12
    )


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(restarts=0)
    with pytest.raises(ValueError):
        SolverConfig(tol_delta=0.0)
    with pytest.raises(ValueError):
        SolverConfig(n_initial_points=0)
    with pytest.raises(ValueError):
        SolverConfig(inner_ba_iters=-3)


# ---------------------------------------------------------------------------
# unquantized reference
# ---------------------------------------------------------------------------


def test_unquantized_vanishes_with_power():
    caps = []
    for peak in (0.01, 0.1, 0.5):
        spec = ChannelSpec(dark_current=0.0, peak_power=peak, avg_power=peak)
        report = unquantized_capacity(spec, SolverConfig(restarts=1, rng_seed=0))
        caps.append(report.capacity_nats)
    assert caps[0] < 1e-2
    assert caps[0] < caps[1] < caps[2]


def test_unquantized_dominates_quantized(solved_1bit_5db):
    spec, _, config, report = solved_1bit_5db
    reference = unquantized_capacity(spec, config)
    assert report.capacity_nats <= reference.capacity_nats + 1e-9


def test_unquantized_matches_independent_grid_ba():
    spec = ChannelSpec.from_snr_db(5.0, 3.0, 4.0)
    config = SolverConfig(restarts=2, rng_seed=0)
    ours = unquantized_capacity(spec, config).capacity_nats
    oracle = grid_ba_capacity(spec, Quantizer.fine(spec))
    # the movable-amplitude solve may beat the fixed grid by its resolution
    assert ours == pytest.approx(oracle, abs=5e-4)
    assert ours >= oracle - 1e-6
