import math

import numpy as np
import pytest

from omp_lab import channels as ch
from omp_lab.quantum import DensityMatrix, bloch_to_density, density_to_bloch, random_bloch, trace_norm
from omp_lab.tomography import (
    CountTable,
    ExperimentConfig,
    MeasurementEvent,
    SeedTree,
    born_table,
    exact_difference_angle,
    log_likelihood,
    mle_iterates,
    mle_reconstruct,
    rho_lambda,
    run_experiment,
    simulate_counts,
    simulate_protocol,
    theta_metric,
)

from conftest import R1, R2


def exact_frequencies(b):
    b = np.asarray(b, dtype=float)
    return np.column_stack([(1 + b) / 2, (1 - b) / 2])


def random_counts(rng):
    m = int(rng.integers(1, 300))
    plus = rng.integers(0, m + 1, size=3)
    return CountTable(np.column_stack([plus, m - plus]))


def test_count_table_invariants():
    with pytest.raises(ValueError):
        CountTable([[1, 2], [3, 1], [1, 2]])
    with pytest.raises(ValueError):
        CountTable([[-1, 2], [1, 0], [1, 0]])
    t = CountTable.from_events([MeasurementEvent("x", "+"), MeasurementEvent("y", "-"), MeasurementEvent("z", "+")])
    assert t.total == 3 and t["y", "-"] == 1
    with pytest.raises(ValueError):
        MeasurementEvent("w", "+")


def test_simulate_counts_deterministic_outcome():
    t = simulate_counts(np.diag([1, 0]), 500, np.random.default_rng(1))
    assert t["z", "+"] == 500 and t["z", "-"] == 0


def test_simulate_counts_maximally_mixed_frequencies():
    t = simulate_counts(np.eye(2) / 2, 10**6, np.random.default_rng(2))
    for a in "xyz":
        assert t[a, "+"] / 10**6 == pytest.approx(0.5, abs=0.002)


def test_simulate_counts_born_rule():
    t = simulate_counts(bloch_to_density(R1), 10**6, np.random.default_rng(3))
    p = (1 + 1 / math.sqrt(2)) / 2
    assert t["x", "+"] / 10**6 == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / 10**6))


def test_seed_tree_streams_are_reproducible_and_distinct():
    a = SeedTree(5).child(3).generator(1, 2).integers(0, 2**62, size=4)
    b = SeedTree(5).generator(3, 1, 2).integers(0, 2**62, size=4)
    c = SeedTree(5).generator(3, 1, 1).integers(0, 2**62, size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_simulate_protocol_totals():
    for twirl in (False, True):
        for n in (1, 3):
            config = ExperimentConfig(N=n, realizations=1, twirl=twirl)
            t1, t2 = simulate_protocol(bloch_to_density(R1), bloch_to_density(R2), config, SeedTree(0))
            assert t1.total == t2.total == 3 * 24 * n
            assert t1.total + t2.total == 2 * 3 * 24 * n


def test_twirled_identity_channel_measures_the_state():
    rho1, rho2 = bloch_to_density(R1), bloch_to_density(R2)
    config = ExperimentConfig(N=20000, realizations=1, twirl=True, channel=ch.identity_channel())
    t1, _ = simulate_protocol(rho1, rho2, config, SeedTree(11))
    n = config.shots_per_basis
    p = born_table(rho1.matrix)[:, 0]
    np.testing.assert_allclose(t1.counts[:, 0] / n, p, atol=4 * 0.5 / math.sqrt(n))


def test_twirled_bit_phase_flip_measures_depolarized_state():
    rho1, rho2 = bloch_to_density(R1), bloch_to_density(R2)
    config = ExperimentConfig(N=20000, realizations=1, twirl=True)
    _, t2 = simulate_protocol(rho1, rho2, config, SeedTree(12))
    n = config.shots_per_basis
    target = ch.apply(ch.depolarizing(0.6), rho2)
    np.testing.assert_allclose(t2.counts[:, 0] / n, born_table(target.matrix)[:, 0], atol=4 * 0.5 / math.sqrt(n))


def test_mle_maximally_mixed_is_fixed_point():
    it = mle_iterates(exact_frequencies([0, 0, 0]), max_iter=5)
    first, second = next(it), next(it)
    np.testing.assert_allclose(second, np.eye(2) / 2, atol=1e-15)
    np.testing.assert_allclose(first, second, atol=1e-15)


def test_mle_recovers_full_rank_state_from_exact_frequencies(rng):
    for _ in range(20):
        b = random_bloch(rng).to_array() * 0.95
        est = mle_reconstruct(exact_frequencies(b))
        assert 0.5 * trace_norm(est.matrix - bloch_to_density(b).matrix) <= 1e-6


def test_mle_pure_state_boundary():
    rho = mle_reconstruct(exact_frequencies([0, 0, 1]), max_iter=500, tol=1e-14)
    assert tuple(density_to_bloch(rho)) == pytest.approx((0, 0, 1), abs=1e-4)


def test_mle_likelihood_monotone_and_iterates_valid(rng):
    for _ in range(30):
        counts = random_counts(rng)
        values = []
        for rho in mle_iterates(counts, max_iter=300):
            DensityMatrix(rho)
            values.append(log_likelihood(counts, rho))
        assert np.all(np.diff(values) >= -1e-12)


def test_mle_rejects_empty_basis():
    with pytest.raises(ValueError, match="basis"):
        mle_reconstruct(CountTable(np.zeros((3, 2), dtype=int)))
    with pytest.raises(ValueError, match="basis"):
        mle_reconstruct(np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))


def test_rho_lambda_examples():
    rho = bloch_to_density((0.1, 0.2, 0.3))
    np.testing.assert_allclose(rho_lambda(rho, rho).matrix, np.eye(2) / 2, atol=1e-15)
    b1, b2 = np.array([0.3, -0.1, 0.5]), np.array([-0.2, 0.4, 0.0])
    lam = rho_lambda(bloch_to_density(b1), bloch_to_density(b2))
    np.testing.assert_allclose(tuple(density_to_bloch(lam.matrix)), (b1 - b2) / 2, atol=1e-15)
    assert lam.trace() == pytest.approx(1.0)
    assert 0 <= lam.eigenvalues()[0] and lam.eigenvalues()[1] <= 1
    pair = rho_lambda(bloch_to_density(R1), bloch_to_density(R2))
    np.testing.assert_allclose(tuple(density_to_bloch(pair.matrix)), (1.08211 / 2, 0.05759 / 2, 0), atol=5e-6)


def test_theta_metric_examples():
    assert theta_metric([1, 2, 3], [2, 4, 6]) == pytest.approx(0.0, abs=1e-7)
    assert theta_metric([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2)
    dx, dy = R1[0] - R2[0], R1[1] - R2[1]
    expected = math.atan2(dy, 0.1 * dx) - math.atan2(dy, dx)
    assert theta_metric([0.1 * dx, dy, 0], [dx, dy, 0]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.4359, abs=5e-5)
    assert math.degrees(expected) == pytest.approx(24.97, abs=5e-3)
    assert exact_difference_angle(ch.bit_phase_flip(0.45)) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        theta_metric([0, 0, 0], [1, 0, 0])


def test_run_experiment_is_deterministic():
    config = ExperimentConfig(N=10, realizations=4, seed=99)
    a = run_experiment(config)
    b = run_experiment(config)
    c = run_experiment(config, workers=2)
    np.testing.assert_array_equal(a.thetas, b.thetas)
    np.testing.assert_array_equal(a.thetas, c.thetas)
    d = run_experiment(ExperimentConfig(N=10, realizations=4, seed=100))
    assert not np.array_equal(a.thetas, d.thetas)


def test_identity_channel_untwirled_angle_shrinks():
    small = run_experiment(ExperimentConfig(N=10, realizations=40, twirl=False, channel=ch.identity_channel(), seed=1))
    large = run_experiment(ExperimentConfig(N=1000, realizations=40, twirl=False, channel=ch.identity_channel(), seed=1))
    assert large.mean < small.mean
    assert large.mean < 0.03
    assert np.all((large.thetas >= 0) & (large.thetas <= math.pi))
