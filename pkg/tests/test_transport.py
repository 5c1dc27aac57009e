import math

import numpy as np
import pytest

from consistency_lab.manifolds import Circle, PointCloud, Sphere2, sample_points
from consistency_lab.transport import (
    balanced_cells,
    spatial_discretize,
    spatial_extend,
    tl2_distance,
)


@pytest.fixture(scope="module")
def circle_plan():
    cloud = sample_points(Circle(1.0), 60, seed=2)
    return balanced_cells(cloud, g_factor=20, seed=12)


def two_center_plan(g_factor=200, seed=5):
    pts = np.array([[0.0, 1.0], [0.0, -1.0]])
    cloud = PointCloud(points=pts, manifold=Circle(1.0), seed=0)
    return balanced_cells(cloud, g_factor=g_factor, seed=seed)


class TestBalancedCells:
    def test_exact_equal_capacities(self, circle_plan):
        counts = np.bincount(circle_plan.assignment, minlength=circle_plan.n)
        assert (counts == circle_plan.capacity).all()
        assert circle_plan.G == circle_plan.n * circle_plan.capacity

    def test_assignment_is_deterministic(self):
        cloud = sample_points(Circle(1.0), 30, seed=7)
        a = balanced_cells(cloud, g_factor=16, seed=3)
        b = balanced_cells(cloud, g_factor=16, seed=3)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        np.testing.assert_array_equal(a.aux_points, b.aux_points)
        c = balanced_cells(cloud, g_factor=16, seed=4)
        assert not np.array_equal(a.aux_points, c.aux_points)

    def test_small_g_factor_rejected(self):
        cloud = sample_points(Circle(1.0), 10, seed=0)
        with pytest.raises(ValueError):
            balanced_cells(cloud, g_factor=8, seed=0)

    def test_antipodal_cells_are_half_circles(self):
        plan = two_center_plan()
        # each cell should be (approximately) the half circle around its
        # center, so the worst assigned point sits near the quarter mark
        assert abs(plan.eps_hat - math.pi / 2) < 0.25
        top = plan.aux_points[plan.cell_members(0)]
        assert (top[:, 1] > -0.35).all()

    def test_eps_hat_dominates_covering_radius(self, circle_plan):
        mf = circle_plan.manifold
        nearest = np.stack([
            mf.geodesic_to_points(c, circle_plan.aux_points)
            for c in circle_plan.centers
        ]).min(axis=0)
        assert circle_plan.eps_hat >= nearest.max() - 1e-12

    def test_cell_diameter_bound(self, circle_plan):
        assert circle_plan.max_cell_diameter() <= 2 * circle_plan.eps_hat + 1e-12

    def test_eps_hat_shrinks_with_resolution(self):
        eps = []
        for n in (100, 400):
            cloud = sample_points(Circle(1.0), n, seed=11)
            eps.append(balanced_cells(cloud, g_factor=20, seed=13).eps_hat)
        assert eps[1] < eps[0]

    def test_summary_fields(self, circle_plan):
        s = circle_plan.summary()
        assert set(s) == {"n", "G", "eps_hat", "max_cell_diam"}
        assert s["n"] == 60 and s["G"] == 1200
        assert 0 < s["eps_hat"] < s["max_cell_diam"] <= 2 * s["eps_hat"] + 1e-12

    def test_works_on_sphere(self):
        cloud = sample_points(Sphere2(1.0), 40, seed=1)
        plan = balanced_cells(cloud, g_factor=16, seed=9)
        counts = np.bincount(plan.assignment, minlength=40)
        assert (counts == 16).all()
        assert plan.max_cell_diameter() <= 2 * plan.eps_hat + 1e-12


class TestDiscretizeExtend:
    def test_constants_pass_through(self, circle_plan):
        v = spatial_discretize(circle_plan, np.full(circle_plan.G, 3.25))
        np.testing.assert_array_equal(v, np.full(circle_plan.n, 3.25))
        ext = spatial_extend(circle_plan, v)
        np.testing.assert_array_equal(ext.on_aux, np.full(circle_plan.G, 3.25))

    def test_callable_and_array_inputs_agree(self, circle_plan):
        mf = circle_plan.manifold
        fn = lambda pts: pts[:, 0] ** 2 - pts[:, 1]
        np.testing.assert_array_equal(
            spatial_discretize(circle_plan, fn),
            spatial_discretize(circle_plan, fn(circle_plan.aux_points)))

    def test_stacked_signals(self, circle_plan):
        rng = np.random.default_rng(0)
        u = rng.normal(size=(circle_plan.G, 3))
        stacked = spatial_discretize(circle_plan, u)
        for k in range(3):
            # reduction order differs between joint and per-column means
            np.testing.assert_allclose(stacked[:, k],
                                       spatial_discretize(circle_plan, u[:, k]),
                                       rtol=0, atol=1e-14)

    def test_averaging_after_extending_is_identity(self, circle_plan):
        rng = np.random.default_rng(1)
        v = rng.normal(size=circle_plan.n)
        ext = spatial_extend(circle_plan, v)
        np.testing.assert_allclose(spatial_discretize(circle_plan, ext.on_aux),
                                   v, rtol=0, atol=1e-14)

    def test_extension_preserves_norm_exactly(self, circle_plan):
        rng = np.random.default_rng(2)
        v = rng.normal(size=circle_plan.n)
        ext = spatial_extend(circle_plan, v)
        norm_disc = np.sqrt(np.mean(v ** 2))
        norm_cont = np.sqrt(np.mean(ext.on_aux ** 2))
        np.testing.assert_allclose(norm_cont, norm_disc, rtol=1e-13)

    def test_adjointness(self, circle_plan):
        rng = np.random.default_rng(3)
        for _ in range(5):
            u = rng.normal(size=circle_plan.G)
            v = rng.normal(size=circle_plan.n)
            lhs = np.mean(spatial_discretize(circle_plan, u) * v)
            rhs = np.mean(u * spatial_extend(circle_plan, v).on_aux)
            np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_extension_commutes_with_pointwise_maps(self, circle_plan):
        rng = np.random.default_rng(4)
        v = rng.normal(size=circle_plan.n)
        a = np.tanh(spatial_extend(circle_plan, v).on_aux)
        b = spatial_extend(circle_plan, np.tanh(v)).on_aux
        np.testing.assert_array_equal(a, b)

    def test_averaging_is_contractive(self, circle_plan):
        rng = np.random.default_rng(5)
        u = rng.normal(size=circle_plan.G)
        pu = spatial_discretize(circle_plan, u)
        assert np.mean(pu ** 2) <= np.mean(u ** 2) + 1e-12

    def test_two_cell_means_match_analytic_average(self):
        # u = sin(theta) over the half circles around (0, +-1) averages
        # to +-2/pi
        plan = two_center_plan(g_factor=400, seed=8)
        u = plan.aux_points[:, 1]
        means = spatial_discretize(plan, u)
        np.testing.assert_allclose(means, [2 / math.pi, -2 / math.pi], atol=0.05)

    def test_extension_handle_evaluates_anywhere(self, circle_plan):
        rng = np.random.default_rng(6)
        v = rng.normal(size=circle_plan.n)
        ext = spatial_extend(circle_plan, v)
        # on-grid: exact cell values, no fallback
        probe = circle_plan.aux_points[[3, 17]]
        np.testing.assert_array_equal(ext(probe),
                                      v[circle_plan.assignment[[3, 17]]])
        assert ext.fallback_count == 0
        # off-grid point: nearest-center value, flagged
        theta = 1.2345
        out = ext(np.array([[math.cos(theta), math.sin(theta)]]))
        assert ext.fallback_count == 1
        centers_d = circle_plan.manifold.geodesic_to_points(
            np.array([math.cos(theta), math.sin(theta)]), circle_plan.centers)
        assert out[0] == v[np.argmin(centers_d)]

    def test_wrong_lengths_rejected(self, circle_plan):
        with pytest.raises(ValueError):
            spatial_discretize(circle_plan, np.zeros(circle_plan.G + 1))
        with pytest.raises(ValueError):
            spatial_extend(circle_plan, np.zeros(circle_plan.n - 1))


class TestTL2:
    def test_matching_constants_give_zero(self, circle_plan):
        d = tl2_distance(circle_plan, np.full(circle_plan.G, 2.5),
                         np.full(circle_plan.n, 2.5))
        assert d == 0.0

    def test_distance_definition(self, circle_plan):
        rng = np.random.default_rng(7)
        u = rng.normal(size=circle_plan.G)
        v = rng.normal(size=circle_plan.n)
        direct = np.sqrt(np.mean((u - spatial_extend(circle_plan, v).on_aux) ** 2))
        np.testing.assert_allclose(tl2_distance(circle_plan, u, v), direct)

    def ladder(self, fn):
        out = []
        for n in (50, 100, 200, 400):
            cloud = sample_points(Circle(1.0), n, seed=20)
            plan = balanced_cells(cloud, g_factor=20, seed=21)
            out.append(fn(plan))
        return out

    def test_discretized_smooth_signal_converges(self):
        sin1 = lambda pts: pts[:, 1]

        def gap(plan):
            return tl2_distance(plan, sin1, spatial_discretize(plan, sin1))

        gaps = self.ladder(gap)
        assert gaps[-1] < gaps[0]
        assert all(g >= 0 for g in gaps)

    def test_roundtrip_error_shrinks(self):
        fn = lambda pts: np.cos(2 * np.arctan2(pts[:, 1], pts[:, 0]))

        def gap(plan):
            u = fn(plan.aux_points)
            extended = spatial_extend(plan, spatial_discretize(plan, u)).on_aux
            return np.sqrt(np.mean((u - extended) ** 2))

        gaps = self.ladder(gap)
        assert gaps[-1] < gaps[0]
