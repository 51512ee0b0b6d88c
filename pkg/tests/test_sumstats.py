import numpy as np
import pytest

from netclust import (DegeneratePointsError, EventSet, InputError,
                      amenity_mix, build_network, envelope_pvalue, kfunction,
                      multitype_pcf, scott_bandwidth, sim_poisson)

from conftest import events_at


class TestScottBandwidth:
    def test_needs_two_points(self):
        with pytest.raises(InputError):
            scott_bandwidth(np.array([[1.0, 2.0]]))

    def test_standard_normal_2d(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((10000, 2))
        want = 10000 ** (-1.0 / 6.0)
        assert scott_bandwidth(pts) == pytest.approx(want, rel=0.03)

    def test_one_dimensional_exponent(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(10000)
        want = 10000 ** (-1.0 / 5.0)
        assert scott_bandwidth(x) == pytest.approx(want, rel=0.03)

    def test_scale_homogeneous(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(size=(50, 2))
        assert scott_bandwidth(8.0 * pts) == 8.0 * scott_bandwidth(pts)

    def test_explicit_n_overrides(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((100, 2))
        a = scott_bandwidth(pts, n=100)
        b = scott_bandwidth(pts, n=6400)
        assert a == scott_bandwidth(pts)
        assert b == pytest.approx(a / 2.0)  # 64**(1/6) == 2

    def test_zero_spread_rejected(self):
        pts = np.column_stack([np.ones(10), np.arange(10.0)])
        with pytest.raises(DegeneratePointsError):
            scott_bandwidth(pts)


class TestKFunction:
    def test_single_event_all_zero(self, grid5, make_events):
        events = events_at(grid5, [0], [0.5], [0.5])
        surf = kfunction(events, grid5, [50.0, 100.0], [0.2, 0.4])
        assert np.array_equal(surf.K, np.zeros((2, 2)))
        assert surf.intensity_mode == "constant"

    def test_two_event_hand_case(self, seg_net, make_events):
        # d = 40 m, |dt| = 0.2; one equidistant location in each direction,
        # lambda = 2 / 100; both strict inequalities must hold
        events = events_at(seg_net, [0, 0], [0.3, 0.7], [0.2, 0.4])
        surf = kfunction(events, seg_net, [30.0, 40.0, 50.0], [0.1, 0.2, 0.3])
        want = np.zeros((3, 3))
        want[2, 2] = 50.0  # (1 / (0.02 * 1)) * 2 ordered pairs / 2 events
        assert np.array_equal(surf.K, want)

    def test_coincident_pair_excluded(self, seg_net, make_events):
        events = events_at(seg_net, [0, 0], [0.5, 0.5], [0.4, 0.5])
        surf = kfunction(events, seg_net, [10.0, 50.0], [0.2, 0.5])
        assert np.array_equal(surf.K, np.zeros((2, 2)))

    def test_monotone_in_both_axes(self, grid5):
        events = sim_poisson(grid5, n=60, rng=np.random.default_rng(4))
        surf = kfunction(events, grid5, np.linspace(20, 300, 8), np.linspace(0.05, 0.6, 6))
        assert np.all(np.diff(surf.K, axis=0) >= 0)
        assert np.all(np.diff(surf.K, axis=1) >= 0)

    def test_csr_mean_matches_analytic(self, cross_net):
        # with the equidistant-count weights, the CSR expectation is exactly
        # (n - 1) / n * r * t * (2 - t) for radii inside every eccentricity
        rng = np.random.default_rng(42)
        r_grid = np.array([100.0, 200.0, 300.0])
        t_grid = np.array([0.2, 0.4])
        n, reps = 80, 200
        Ks = np.empty((reps, 3, 2))
        for s in range(reps):
            ev = sim_poisson(cross_net, n=n, rng=rng)
            Ks[s] = kfunction(ev, cross_net, r_grid, t_grid).K
        mean = Ks.mean(axis=0)
        se = Ks.std(axis=0, ddof=1) / np.sqrt(reps)
        want = (n - 1) / n * r_grid[:, None] * (t_grid * (2 - t_grid))[None, :]
        assert np.all(np.abs(mean - want) < 3 * se)

    def test_doubling_intensity_halves_exactly(self, grid5):
        events = sim_poisson(grid5, n=40, rng=np.random.default_rng(5))
        lam = np.full(40, 40 / grid5.total_length)
        r, t = np.linspace(20, 300, 6), np.linspace(0.1, 0.5, 5)
        k1 = kfunction(events, grid5, r, t, intensity=lam).K
        k2 = kfunction(events, grid5, r, t, intensity=2.0 * lam).K
        assert np.array_equal(k2, k1 / 2.0)

    def test_plugin_matches_default(self, grid5):
        events = sim_poisson(grid5, n=40, rng=np.random.default_rng(6))
        lam = np.full(40, 40 / grid5.total_length)
        r, t = np.linspace(20, 300, 6), np.linspace(0.1, 0.5, 5)
        a = kfunction(events, grid5, r, t)
        b = kfunction(events, grid5, r, t, intensity=lam)
        assert np.array_equal(a.K, b.K)
        assert a.intensity_mode == "constant"
        assert b.intensity_mode == "plugin"

    def test_grid_validation(self, grid5, make_events):
        events = events_at(grid5, [0, 1], [0.5, 0.5], [0.2, 0.8])
        with pytest.raises(InputError):
            kfunction(events, grid5, [0.0, 100.0], [0.2, 0.4])
        with pytest.raises(InputError):
            kfunction(events, grid5, [100.0, 50.0], [0.2, 0.4])
        with pytest.raises(InputError):
            kfunction(events, grid5, [50.0, 100.0], [0.2, 0.4], intensity=np.ones(3))
        with pytest.raises(InputError):
            kfunction(events, grid5, [50.0, 100.0], [0.2, 0.4],
                      intensity=np.array([1.0, 0.0]))


class TestEnvelope:
    R = np.linspace(20, 200, 10)
    T = np.linspace(0.05, 0.5, 10)

    def test_requires_uniform_grids(self, grid5, make_events):
        events = events_at(grid5, [0, 1], [0.5, 0.5], [0.2, 0.8])
        with pytest.raises(InputError):
            envelope_pvalue(events, grid5, [1.0, 2.0, 4.0], self.T, m=5)
        with pytest.raises(InputError):
            envelope_pvalue(events, grid5, self.R, [0.1, 0.2, 0.4], m=5)

    def test_null_pattern_not_extreme(self, grid5):
        events = sim_poisson(grid5, n=80, rng=np.random.default_rng(100))
        res = envelope_pvalue(events, grid5, self.R, self.T, m=19,
                              rng=np.random.default_rng(7))
        assert res.p_value > 0.05
        assert res.n_excluded == 0
        assert len(res.t_sims) == 19
        assert np.all(res.env_lo <= res.env_hi)

    def test_tight_cluster_hits_minimum_p(self, grid5):
        off = np.random.default_rng(1).uniform(0.45, 0.55, 60)
        t = np.clip(np.random.default_rng(2).normal(0.5, 0.03, 60), 0, 1)
        events = events_at(grid5, np.zeros(60, dtype=int), off, t)
        res = envelope_pvalue(events, grid5, self.R, self.T, m=19,
                              rng=np.random.default_rng(8))
        assert res.p_value == pytest.approx(1.0 / 20.0)
        assert res.t_obs > res.t_sims.max()

    def test_deterministic_per_rng_seed(self, grid5):
        events = sim_poisson(grid5, n=40, rng=np.random.default_rng(9))
        a = envelope_pvalue(events, grid5, self.R, self.T, m=9,
                            rng=np.random.default_rng(3))
        b = envelope_pvalue(events, grid5, self.R, self.T, m=9,
                            rng=np.random.default_rng(3))
        assert a.p_value == b.p_value
        assert np.array_equal(a.t_sims, b.t_sims)
        assert np.array_equal(a.env_lo, b.env_lo)


class TestMultitypePcf:
    def test_symmetric_in_patterns(self, grid5):
        e1 = sim_poisson(grid5, n=40, rng=np.random.default_rng(10))
        e2 = sim_poisson(grid5, n=30, rng=np.random.default_rng(11))
        r = np.linspace(20, 300, 12)
        a = multitype_pcf(e1, e2, grid5, r, h=30.0)
        b = multitype_pcf(e2, e1, grid5, r, h=30.0)
        assert np.allclose(a.g, b.g, rtol=1e-12)
        assert a.n_pairs == b.n_pairs == 1200

    def test_distant_patterns_vanish_at_small_r(self, grid10, make_events):
        e1 = events_at(grid10, [0, 1], [0.5, 0.5], [0.2, 0.4])
        far = grid10.n_segments - 1
        e2 = events_at(grid10, [far, far - 1], [0.5, 0.5], [0.6, 0.8])
        curve = multitype_pcf(e1, e2, grid10, [25.0, 50.0], h=20.0)
        assert np.all(curve.g < 1e-12)

    def test_independent_patterns_near_one(self, grid5):
        e1 = sim_poisson(grid5, n=150, rng=np.random.default_rng(3))
        e2 = sim_poisson(grid5, n=150, rng=np.random.default_rng(4))
        curve = multitype_pcf(e1, e2, grid5, np.linspace(20, 300, 15))
        assert abs(curve.g[4:11].mean() - 1.0) < 0.25

    def test_jittered_copy_peaks_at_small_r(self, grid5):
        rng = np.random.default_rng(12)
        seg = rng.integers(0, grid5.n_segments, size=100)
        off = rng.uniform(0.1, 0.9, size=100)
        t = rng.uniform(size=100)
        e1 = events_at(grid5, seg, off, t)
        e2 = events_at(grid5, seg, np.clip(off + rng.uniform(-0.02, 0.02, 100), 0, 1), t)
        curve = multitype_pcf(e1, e2, grid5, [5.0, 10.0, 300.0], h=5.0)
        assert curve.g[0] > 2.0
        assert curve.g[1] > 1.0

    def test_default_bandwidth_is_scott(self, grid5):
        e1 = sim_poisson(grid5, n=30, rng=np.random.default_rng(13))
        e2 = sim_poisson(grid5, n=20, rng=np.random.default_rng(14))
        curve = multitype_pcf(e1, e2, grid5, [100.0, 200.0])
        D = grid5.pairwise_distances(e1, e2)
        assert curve.bandwidth == pytest.approx(scott_bandwidth(D[np.isfinite(D)]))

    def test_empty_pattern_rejected(self, grid5, make_events):
        e1 = events_at(grid5, [0], [0.5], [0.5])
        empty = EventSet(np.array([], dtype=np.int64), np.array([]),
                         np.empty((0, 2)), np.array([]))
        with pytest.raises(InputError):
            multitype_pcf(e1, empty, grid5, [50.0])

    def test_disconnected_patterns_rejected(self):
        net = build_network(np.array([[0.0, 0.0, 100.0, 0.0],
                                      [1e5, 0.0, 1e5 + 100.0, 0.0]]))
        e1 = events_at(net, [0], [0.5], [0.2])
        e2 = events_at(net, [1], [0.5], [0.8])
        with pytest.raises(InputError):
            multitype_pcf(e1, e2, net, [50.0])


class TestAmenityMix:
    def test_single_category(self):
        table = amenity_mix(np.array([[0.0, 0.0]]),
                            np.array([[1.0, 0.0], [2.0, 0.0]]),
                            ["cafe", "cafe"], radius=10.0)
        assert table.categories == ("cafe",)
        assert np.array_equal(table.proportions, [[1.0]])
        assert not table.empty[0]

    def test_equal_weighted_counts_split_evenly(self):
        amen = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
        cats = ["bar", "bar", "shop", "shop"]
        table = amenity_mix(np.array([[0.0, 0.0]]), amen, cats, radius=10.0)
        assert np.allclose(table.proportions, [[0.5, 0.5]])

    def test_three_category_hand_oracle(self):
        # in radius: 2 of a, 1 of b, 0 of c; global totals 4, 2, 2 over 8
        # weights 2, 4, 4 -> weighted 4, 4, 0 -> shares 0.5, 0.5, 0
        amen = np.array([
            [1.0, 0.0], [2.0, 0.0],            # a, in radius
            [100.0, 0.0], [101.0, 0.0],        # a, outside
            [3.0, 0.0],                        # b, in radius
            [102.0, 0.0],                      # b, outside
            [103.0, 0.0], [104.0, 0.0],        # c, outside
        ])
        cats = ["a", "a", "a", "a", "b", "b", "c", "c"]
        table = amenity_mix(np.array([[0.0, 0.0]]), amen, cats, radius=10.0)
        assert table.categories == ("a", "b", "c")
        assert np.array_equal(table.counts, [[2.0, 1.0, 0.0]])
        assert np.allclose(table.weights, [2.0, 4.0, 4.0])
        assert np.allclose(table.proportions, [[0.5, 0.5, 0.0]])

    def test_duplication_invariant(self):
        rng = np.random.default_rng(15)
        amen = rng.uniform(0, 100, size=(30, 2))
        cats = list(rng.choice(["a", "b", "c"], size=30))
        centers = rng.uniform(0, 100, size=(4, 2))
        once = amenity_mix(centers, amen, cats, radius=30.0)
        twice = amenity_mix(centers, np.vstack([amen, amen]), cats + cats, radius=30.0)
        assert np.allclose(once.proportions, twice.proportions)
        assert np.array_equal(once.empty, twice.empty)

    def test_out_of_range_center_flagged_empty(self):
        table = amenity_mix(np.array([[0.0, 0.0], [500.0, 0.0]]),
                            np.array([[1.0, 0.0], [2.0, 0.0]]),
                            ["a", "b"], radius=10.0)
        assert not table.empty[0]
        assert table.empty[1]
        assert np.array_equal(table.proportions[1], [0.0, 0.0])

    def test_rows_ordering(self):
        table = amenity_mix(np.array([[0.0, 0.0], [1.0, 0.0]]),
                            np.array([[1.0, 0.0], [2.0, 0.0]]),
                            ["b", "a"], radius=10.0)
        rows = list(table.rows())
        assert [r[:2] for r in rows] == [(0, "a"), (0, "b"), (1, "a"), (1, "b")]
        assert all(isinstance(r[2], float) for r in rows)

    def test_validation(self):
        centers = np.array([[0.0, 0.0]])
        amen = np.array([[1.0, 0.0]])
        with pytest.raises(InputError):
            amenity_mix(centers, amen, ["a"], radius=0.0)
        with pytest.raises(InputError):
            amenity_mix(centers, amen, ["a", "b"], radius=10.0)
        with pytest.raises(InputError):
            amenity_mix(centers, np.empty((0, 2)), [], radius=10.0)
