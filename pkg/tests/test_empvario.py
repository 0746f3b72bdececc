import math

import numpy as np
import pytest
from scipy.stats import norm

from variokrig import (
    Direction,
    DomainError,
    SpatialDataset,
    empirical_variogram,
    huber_correction,
    huber_robust_variogram,
    variogram_cloud,
)


def simple_pair():
    return SpatialDataset([[0.0, 0.0], [1.0, 0.0]], [0.0, 4.0])


def random_dataset(rng, n=40):
    return SpatialDataset(rng.uniform(0, 10, size=(n, 2)), rng.normal(size=n))


def test_cloud_two_points():
    cloud = variogram_cloud(simple_pair(), 2.0)
    assert cloud.shape == (1, 2)
    assert cloud[0, 0] == pytest.approx(1.0)
    assert cloud[0, 1] == pytest.approx(8.0)


def test_cloud_constant_field():
    data = SpatialDataset(np.random.default_rng(0).uniform(0, 5, (12, 2)), np.full(12, 3.3))
    cloud = variogram_cloud(data, 100.0)
    assert np.all(cloud[:, 1] == 0.0)


def test_cloud_pair_count():
    rng = np.random.default_rng(1)
    data = random_dataset(rng, n=17)
    cloud = variogram_cloud(data, 1e9)
    assert cloud.shape[0] == 17 * 16 // 2


def test_cloud_empty_when_nothing_qualifies():
    cloud = variogram_cloud(simple_pair(), 0.5)
    assert cloud.shape[0] == 0


def test_matheron_single_pair():
    emp = empirical_variogram(simple_pair(), [0.0, 2.0], estimator="matheron")
    assert emp.bins[0].gamma_hat == pytest.approx(8.0)
    assert emp.bins[0].n_pairs == 1


def test_cressie_hawkins_single_pair():
    emp = empirical_variogram(simple_pair(), [0.0, 2.0], estimator="cressie_hawkins")
    assert emp.bins[0].gamma_hat == pytest.approx(16.0 / (2.0 * 0.951), rel=1e-12)


def test_matheron_pooled_bin_equals_cloud_mean():
    rng = np.random.default_rng(2)
    data = random_dataset(rng)
    cloud = variogram_cloud(data, 1e9)
    emp = empirical_variogram(data, [0.0, 1e9], estimator="matheron")
    assert emp.bins[0].gamma_hat == pytest.approx(cloud[:, 1].mean(), rel=1e-12)


def test_permutation_invariance_bit_identical():
    rng = np.random.default_rng(3)
    data = random_dataset(rng)
    edges = np.linspace(0.0, 12.0, 7)
    perm = rng.permutation(len(data))
    shuffled = SpatialDataset(data.locations[perm], data.values[perm])
    for estimator in ("matheron", "cressie_hawkins"):
        a = empirical_variogram(data, edges, estimator)
        b = empirical_variogram(shuffled, edges, estimator)
        for ba, bb in zip(a.bins, b.bins):
            assert ba == bb
    ha = huber_robust_variogram(data, edges, c=2.0)
    hb = huber_robust_variogram(shuffled, edges, c=2.0)
    for ba, bb in zip(ha.bins, hb.bins):
        assert ba == bb


def test_estimates_nonnegative_and_zero_on_constant():
    locs = np.random.default_rng(4).uniform(0, 8, (25, 2))
    const = SpatialDataset(locs, np.full(25, 1.5))
    edges = np.linspace(0.0, 10.0, 6)
    for estimator in ("matheron", "cressie_hawkins"):
        emp = empirical_variogram(const, edges, estimator)
        for b in emp.nonempty():
            assert b.gamma_hat == 0.0
    hub = huber_robust_variogram(const, edges, c=2.0)
    for b in hub.nonempty():
        assert b.gamma_hat == 0.0


def test_directional_filter():
    data = SpatialDataset([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0.0, 2.0, 5.0])
    east = empirical_variogram(
        data, [0.0, 3.0], direction=Direction(0.0, math.radians(22.5))
    )
    assert east.bins[0].n_pairs == 1
    assert east.bins[0].gamma_hat == pytest.approx(2.0)
    north = empirical_variogram(
        data, [0.0, 3.0], direction=Direction(math.pi / 2.0, math.radians(22.5))
    )
    assert north.bins[0].n_pairs == 1
    assert north.bins[0].gamma_hat == pytest.approx(12.5)


def test_direction_even_in_pi():
    rng = np.random.default_rng(5)
    data = random_dataset(rng)
    edges = np.linspace(0.0, 12.0, 5)
    fwd = empirical_variogram(data, edges, direction=Direction(0.4))
    bwd = empirical_variogram(data, edges, direction=Direction(0.4 + math.pi))
    for ba, bb in zip(fwd.bins, bwd.bins):
        assert ba == bb


def test_zero_distance_pairs_counted_not_binned():
    data = SpatialDataset([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], [1.0, 2.0, 3.0])
    emp = empirical_variogram(data, [0.0, 2.0])
    assert emp.n_zero_distance == 1
    assert emp.bins[0].n_pairs == 2  # the two pairs at distance 1


def test_rejects_bad_edges():
    data = simple_pair()
    with pytest.raises(DomainError):
        empirical_variogram(data, [1.0, 1.0, 2.0])
    with pytest.raises(DomainError):
        empirical_variogram(data, [2.0])
    with pytest.raises(DomainError):
        empirical_variogram(data, [0.0, 1.0], estimator="huber")


def test_empty_bins_marked():
    emp = empirical_variogram(simple_pair(), [0.0, 0.5, 2.0])
    assert emp.bins[0].n_pairs == 0
    assert emp.bins[0].gamma_hat is None
    assert emp.bins[0].mean_pair_distance is None


def test_huber_matches_matheron_for_large_threshold():
    rng = np.random.default_rng(6)
    for _ in range(5):
        data = random_dataset(rng)
        edges = np.linspace(0.0, 12.0, 6)
        mat = empirical_variogram(data, edges, "matheron")
        hub = huber_robust_variogram(data, edges, c=10.0)
        for bm, bh in zip(mat.bins, hub.bins):
            if bm.n_pairs > 0 and bm.gamma_hat > 0:
                assert bh.gamma_hat == pytest.approx(bm.gamma_hat, rel=1e-6)


def test_truncated_mean_never_exceeds_raw_mean():
    # at the fixed point, f(c) g_H = mean(min(half_sq_diff, c^2 g_H)) <= matheron
    rng = np.random.default_rng(7)
    c = 1.5
    fc = huber_correction(c)
    for _ in range(10):
        data = random_dataset(rng)
        edges = np.linspace(0.0, 12.0, 6)
        mat = empirical_variogram(data, edges, "matheron")
        hub = huber_robust_variogram(data, edges, c=c)
        for bm, bh in zip(mat.bins, hub.bins):
            if bm.n_pairs > 0:
                assert fc * bh.gamma_hat <= bm.gamma_hat * (1.0 + 1e-12)


def test_huber_correction_closed_form_vs_monte_carlo():
    rng = np.random.default_rng(8)
    u = rng.standard_normal(1_000_000)
    for c in (0.7, 1.5, 2.0, 3.0):
        draws = np.minimum(u**2, c**2)
        mc = draws.mean()
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(huber_correction(c) - mc) < 3.0 * se


def test_huber_correction_limits():
    assert huber_correction(10.0) == pytest.approx(1.0, abs=1e-12)
    assert huber_correction(0.05) == pytest.approx(
        2.0 * norm.cdf(0.05) - 1.0 - 0.1 * norm.pdf(0.05) + 0.005 * (1.0 - norm.cdf(0.05)),
        rel=1e-12,
    )


def test_csv_output():
    emp = empirical_variogram(simple_pair(), [0.0, 0.5, 2.0])
    text = emp.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "lag_center,mean_pair_distance,gamma_hat,n_pairs"
    assert lines[1].endswith(",0")  # empty bin
    assert lines[2].split(",")[3] == "1"
