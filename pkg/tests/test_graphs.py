import math

import numpy as np
import pytest
from scipy import integrate, sparse

from consistency_lab.graphs import (
    build_graph,
    check_connected,
    component_count,
    graph_from_debug_json,
    graph_laplacian,
    make_kernel,
    surface_tension,
)
from consistency_lab.manifolds import Circle, FlatTorus2, PointCloud, Sphere2, sample_points

TWO_PI = 2.0 * math.pi


def cloud_from_angles(angles, radius=1.0):
    pts = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return PointCloud(points=pts, manifold=Circle(radius), seed=0)


# ---------------------------------------------------------------------------
# kernel constants
# ---------------------------------------------------------------------------

class TestKernels:
    def test_surface_tension_closed_forms(self):
        assert surface_tension("indicator", 1) == pytest.approx(1 / 3)
        assert surface_tension("indicator", 2) == pytest.approx(1 / 4)
        assert surface_tension("triangle", 1) == pytest.approx(1 / 6)
        assert surface_tension("triangle", 2) == pytest.approx(3 / 20)

    def test_unsupported_dimension_rejected(self):
        with pytest.raises(ValueError):
            surface_tension("indicator", 3)
        with pytest.raises(ValueError):
            make_kernel("gaussian", 1)

    @pytest.mark.parametrize("shape", ["indicator", "triangle"])
    @pytest.mark.parametrize("m", [1, 2])
    def test_kernel_integrates_to_one(self, shape, m):
        k = make_kernel(shape, m)
        if m == 1:
            total, _ = integrate.quad(lambda t: k.profile(abs(t)), -1, 1)
        else:
            total, _ = integrate.quad(lambda r: TWO_PI * r * k.profile(r), 0, 1)
        assert total == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("shape", ["indicator", "triangle"])
    @pytest.mark.parametrize("m", [1, 2])
    def test_surface_tension_matches_quadrature(self, shape, m):
        k = make_kernel(shape, m)
        if m == 1:
            val, _ = integrate.quad(lambda t: t * t * k.profile(abs(t)), -1, 1)
        else:
            # polar: integral of r^2 cos^2(phi) * eta(r) * r
            val, _ = integrate.quad(lambda r: math.pi * r ** 3 * k.profile(r), 0, 1)
        assert val == pytest.approx(k.sigma_eta, rel=1e-10)

    def test_profiles(self):
        k = make_kernel("triangle", 1)
        np.testing.assert_allclose(k.profile(np.array([0.0, 0.5, 1.0, 2.0])),
                                   [1.0, 0.5, 0.0, 0.0])
        k = make_kernel("indicator", 2)
        np.testing.assert_allclose(k.profile(np.array([0.0, 1.0, 1.0001])),
                                   [1 / math.pi, 1 / math.pi, 0.0])


# ---------------------------------------------------------------------------
# graph assembly
# ---------------------------------------------------------------------------

class TestBuildGraph:
    def test_three_near_points_weight(self):
        # three points within unit distance of each other, indicator, h=1:
        # every off-diagonal weight is (1/3) * (1/2)
        cloud = cloud_from_angles([0.0, 0.3, 0.6])
        g = build_graph(cloud, h=1.0)
        w = g.weights.toarray()
        expect = np.full((3, 3), 1 / 6.0)
        np.fill_diagonal(expect, 0.0)
        np.testing.assert_allclose(w, expect, rtol=1e-14)

    def test_far_pair_gets_zero_weight(self):
        cloud = cloud_from_angles([0.0, math.pi])
        g = build_graph(cloud, h=1.0)
        assert g.weights.nnz == 0

    def test_duplicating_the_cloud_halves_weights(self):
        base = cloud_from_angles([0.0, 0.2, 0.4, 0.9])
        doubled = PointCloud(points=np.vstack([base.points, base.points]),
                             manifold=base.manifold, seed=0)
        g1 = build_graph(base, h=0.5)
        g2 = build_graph(doubled, h=0.5)
        w1 = g1.weights.toarray()
        w2 = g2.weights.toarray()
        np.testing.assert_allclose(w2[:4, :4], w1 / 2, atol=1e-15)
        # a duplicated pair is at distance zero, so its weight is eta(0)/(n h)
        dup = 0.5 / (8 * 0.5)
        np.testing.assert_allclose(w2[:4, 4:], w1 / 2 + dup * np.eye(4), atol=1e-15)

    def test_weights_symmetric_with_compact_support(self):
        cloud = sample_points(Sphere2(1.0), 300, seed=5)
        g = build_graph(cloud, h=0.4, kernel=make_kernel("triangle", 2))
        w = g.weights
        assert (w != w.T).nnz == 0
        coo = sparse.triu(w, k=1).tocoo()
        d = np.linalg.norm(cloud.points[coo.row] - cloud.points[coo.col], axis=1)
        assert d.max() <= 0.4
        assert w.diagonal().max() == 0.0

    def test_matches_brute_force_dense(self):
        cloud = sample_points(FlatTorus2((TWO_PI, TWO_PI)), 120, seed=11)
        h = 1.1
        k = make_kernel("indicator", 2)
        g = build_graph(cloud, h, k)
        diff = cloud.points[:, None, :] - cloud.points[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        dense = k.profile(dist / h) / (120 * h ** 2)
        np.fill_diagonal(dense, 0.0)
        np.testing.assert_allclose(g.weights.toarray(), dense, atol=1e-16)

    def test_kernel_dimension_must_match(self):
        cloud = sample_points(Sphere2(1.0), 20, seed=0)
        with pytest.raises(ValueError):
            build_graph(cloud, h=0.5, kernel=make_kernel("indicator", 1))
        with pytest.raises(ValueError):
            build_graph(cloud, h=0.0)

    def test_debug_json_round_trip(self):
        cloud = cloud_from_angles(np.linspace(0, 2, 7))
        g = build_graph(cloud, h=0.8)
        clone = graph_from_debug_json(g.to_debug_json())
        assert clone.n == g.n and clone.h == g.h
        np.testing.assert_allclose(clone.weights.toarray(), g.weights.toarray())


# ---------------------------------------------------------------------------
# Laplacian
# ---------------------------------------------------------------------------

class TestLaplacian:
    def complete3(self):
        return build_graph(cloud_from_angles([0.0, 0.3, 0.6]), h=1.0)

    def test_constant_vector_in_kernel(self):
        lap = graph_laplacian(self.complete3())
        np.testing.assert_allclose(lap @ np.ones(3), 0.0, atol=1e-14)

    def test_three_point_spectrum(self):
        # equal-weight complete graph: eigenvalues {0, c n w} with
        # c = 2/(sigma h^2) = 6, n = 3, w = 1/6
        lap = graph_laplacian(self.complete3())
        vals = np.linalg.eigvalsh(lap.toarray())
        np.testing.assert_allclose(vals, [0.0, 3.0, 3.0], atol=1e-12)

    def test_indicator_vector_value(self):
        lap = graph_laplacian(self.complete3())
        v = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose((lap @ v)[0], 2.0, rtol=1e-14)

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_small_complete_graph_closed_form(self, n):
        # cluster the points so every pair is inside h
        cloud = cloud_from_angles(np.linspace(0.0, 0.2, n))
        g = build_graph(cloud, h=1.0)
        lap = graph_laplacian(g)
        w = 0.5 / n
        expected = np.concatenate([[0.0], np.full(n - 1, 6.0 * n * w)])
        vals = np.linalg.eigvalsh(lap.toarray())
        np.testing.assert_allclose(vals, expected, atol=1e-12)

    def test_row_sums_vanish(self):
        cloud = sample_points(Circle(1.0), 400, seed=3)
        lap = graph_laplacian(build_graph(cloud, h=0.15))
        rows = np.asarray(lap.sum(axis=1)).ravel()
        assert np.abs(rows).max() < 1e-12

    def test_positive_semidefinite(self):
        cloud = sample_points(Sphere2(1.0), 250, seed=9)
        lap = graph_laplacian(build_graph(cloud, h=0.5,
                                          kernel=make_kernel("triangle", 2)))
        vals = np.linalg.eigvalsh(lap.toarray())
        assert vals.min() >= -1e-10

    def test_quadratic_form_identity(self):
        rng = np.random.default_rng(42)
        cloud = sample_points(Circle(1.0), 200, seed=1)
        h = 0.2
        g = build_graph(cloud, h)
        lap = graph_laplacian(g)
        w = g.weights.toarray()
        sigma = g.kernel.sigma_eta
        for _ in range(5):
            v = rng.normal(size=200)
            quad = (v @ (lap @ v)) / 200
            direct = (w * (v[:, None] - v[None, :]) ** 2).sum() / (sigma * h * h) / 200
            np.testing.assert_allclose(quad, direct, rtol=1e-10)

    def test_zero_multiplicity_counts_components(self):
        # two antipodal arcs too far apart to connect at this bandwidth
        angles = np.concatenate([np.linspace(0, 0.3, 8),
                                 np.linspace(math.pi, math.pi + 0.3, 8)])
        g = build_graph(cloud_from_angles(angles), h=0.3)
        lap = graph_laplacian(g)
        vals = np.linalg.eigvalsh(lap.toarray())
        assert component_count(g) == 2
        assert (np.abs(vals) < 1e-10).sum() == 2


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

class TestConnectivity:
    def test_complete_graph_connected(self):
        g = build_graph(cloud_from_angles([0.0, 0.1, 0.2]), h=1.0)
        assert check_connected(g)

    def test_two_clusters_disconnected(self):
        angles = np.concatenate([np.linspace(0, 0.2, 5),
                                 np.linspace(math.pi, math.pi + 0.2, 5)])
        g = build_graph(cloud_from_angles(angles), h=0.25)
        assert not check_connected(g)
        assert component_count(g) == 2

    def test_single_vertex_connected(self):
        from consistency_lab.graphs import WeightedGraph
        g = WeightedGraph(n=1, h=1.0, kernel=make_kernel("indicator", 1),
                          weights=sparse.csr_matrix((1, 1)))
        assert check_connected(g)

    def test_dense_circle_sample_connects(self):
        cloud = sample_points(Circle(1.0), 600, seed=21)
        assert check_connected(build_graph(cloud, h=0.2))
