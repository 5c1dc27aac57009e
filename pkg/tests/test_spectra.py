import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import spearmanr

from consistency_lab.graphs import build_graph, graph_laplacian
from consistency_lab.manifolds import Circle, PointCloud, Sphere2, sample_points
from consistency_lab.spectra import (
    BlockPartition,
    DegenerateAlignmentError,
    DiscreteSpectrum,
    align_blocks,
    delta_bound,
    detect_blocks,
    discrete_clusters,
    eigenvalue_report,
    lowest_eigenpairs,
    procrustes_align,
    residual_norms,
)
from consistency_lab.transport import balanced_cells


@pytest.fixture(scope="module")
def circle_setup():
    man = Circle(1.0)
    cloud = sample_points(man, 240, seed=5)
    plan = balanced_cells(cloud, g_factor=20, seed=9)
    lap = graph_laplacian(build_graph(cloud, h=0.4))
    spec = lowest_eigenpairs(lap, 12)
    table = man.spectrum(16)
    return cloud, plan, lap, spec, table


@pytest.fixture(scope="module")
def circle_frame(circle_setup):
    _, plan, _, spec, table = circle_setup
    return align_blocks(spec, plan, table, 11)


# ---------------------------------------------------------------------------
# eigensolves
# ---------------------------------------------------------------------------

class TestLowestEigenpairs:
    def test_complete_graph_closed_form(self):
        # three mutually connected points, indicator kernel, h = 1:
        # every pair carries weight 1/6, so the Laplacian spectrum is
        # 6 * {0, 3/6, 3/6} = {0, 3, 3}
        ang = np.array([0.0, 0.1, 0.2])
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
        cloud = PointCloud(points=pts, manifold=Circle(1.0), seed=0)
        lap = graph_laplacian(build_graph(cloud, h=1.0))
        spec = lowest_eigenpairs(lap, 3)
        np.testing.assert_allclose(spec.eigenvalues, [0.0, 3.0, 3.0], atol=1e-12)

    def test_first_pair_is_constant(self, circle_setup):
        _, _, _, spec, _ = circle_setup
        assert spec.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
        phi1 = spec.eigenvectors[:, 0]
        np.testing.assert_allclose(phi1, np.sign(phi1[0]) * np.ones_like(phi1),
                                   atol=1e-8)

    def test_orthonormal_and_small_residuals(self, circle_setup):
        _, _, lap, spec, _ = circle_setup
        gram = spec.gram()
        assert np.abs(gram - np.eye(spec.count)).max() < 1e-10
        res = residual_norms(lap, spec)
        assert (res <= 1e-8 * (1.0 + np.abs(spec.eigenvalues))).all()
        assert (np.diff(spec.eigenvalues) >= 0).all()

    def test_dense_vs_shift_invert(self):
        cloud = sample_points(Circle(1.0), 512, seed=3)
        lap = graph_laplacian(build_graph(cloud, h=0.3))
        dense = lowest_eigenpairs(lap, 8, method="dense")
        iterative = lowest_eigenpairs(lap, 8, method="shift-invert")
        assert dense.solver == "dense"
        assert iterative.solver == "shift-invert"
        np.testing.assert_allclose(dense.eigenvalues, iterative.eigenvalues,
                                   atol=1e-8)
        assert np.abs(iterative.gram() - np.eye(8)).max() < 1e-10

    def test_shift_invert_is_deterministic(self):
        cloud = sample_points(Circle(1.0), 300, seed=1)
        lap = graph_laplacian(build_graph(cloud, h=0.4))
        a = lowest_eigenpairs(lap, 5, method="shift-invert")
        b = lowest_eigenpairs(lap, 5, method="shift-invert")
        np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
        np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)

    def test_bad_requests_rejected(self, circle_setup):
        _, _, lap, _, _ = circle_setup
        with pytest.raises(ValueError):
            lowest_eigenpairs(lap, lap.shape[0] + 1)
        with pytest.raises(ValueError):
            lowest_eigenpairs(lap, 0)
        with pytest.raises(ValueError):
            lowest_eigenpairs(lap, 3, method="jacobi")

    def test_spectrum_shape_validation(self):
        with pytest.raises(ValueError):
            DiscreteSpectrum(np.array([0.0, 1.0]), np.ones((4, 3)), "dense")
        with pytest.raises(ValueError):
            DiscreteSpectrum(np.array([1.0, 0.0]), np.ones((4, 2)), "dense")


# ---------------------------------------------------------------------------
# cluster / block detection
# ---------------------------------------------------------------------------

class TestClustersAndBlocks:
    def test_clusters_of_well_separated_values(self):
        assert discrete_clusters([0.0, 1.0, 2.5]) == [(0, 0), (1, 1), (2, 2)]

    def test_clusters_chain_near_degenerate_values(self):
        vals = [0.0, 1.0, 1.0 + 1e-9, 1.0 + 2e-9, 3.0]
        assert discrete_clusters(vals) == [(0, 0), (1, 3), (4, 4)]

    @given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_clusters_partition_sorted_values(self, raw):
        vals = np.sort(np.asarray(raw))
        clusters = discrete_clusters(vals)
        covered = [i for lo, hi in clusters for i in range(lo, hi + 1)]
        assert covered == list(range(len(vals)))
        for (_, hi), (lo2, _) in zip(clusters, clusters[1:]):
            assert vals[lo2] - vals[hi] > 1e-6 * (1.0 + vals[hi])

    def test_circle_blocks(self, circle_setup):
        _, _, _, spec, table = circle_setup
        part = detect_blocks(spec.eigenvalues, table, 11)
        assert part.blocks == ((0, 0), (1, 2), (3, 4), (5, 6), (7, 8), (9, 10))
        assert part.k_n == 11

    def test_sphere_block_sizes(self):
        table = Sphere2(1.0).spectrum(9)
        # discrete values do not matter for the partition itself
        part = detect_blocks(table.eigenvalues, table, 9)
        sizes = [hi - lo + 1 for lo, hi in part.blocks]
        assert sizes == [1, 3, 5]

    def test_partition_follows_continuum_boundaries(self, circle_setup):
        # a discrete cluster across a continuum boundary is split there,
        # and counted as a straddle
        _, _, _, _, table = circle_setup
        vals = np.array([0.0, 1.0, 1.0 + 1e-9, 1.0 + 2e-9])
        part = detect_blocks(vals, table, 4)
        assert part.blocks == ((0, 0), (1, 2), (3, 3))
        assert part.straddle_count == 1

    def test_no_straddles_for_separated_spectra(self, circle_setup):
        _, _, _, spec, table = circle_setup
        part = detect_blocks(spec.eigenvalues, table, 11)
        assert part.straddle_count == 0

    def test_out_of_range_k_rejected(self, circle_setup):
        _, _, _, spec, table = circle_setup
        with pytest.raises(ValueError):
            detect_blocks(spec.eigenvalues, table, 0)
        with pytest.raises(ValueError):
            detect_blocks(spec.eigenvalues, table, spec.count + 10)


# ---------------------------------------------------------------------------
# orthogonal alignment
# ---------------------------------------------------------------------------

class TestProcrustes:
    def test_identity_cross_gram(self):
        r, res = procrustes_align(np.eye(3))
        np.testing.assert_allclose(r, np.eye(3), atol=1e-12)
        assert res.max() < 1e-12

    def test_recovers_exact_rotation(self):
        th = 0.7
        q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        r, res = procrustes_align(q)
        np.testing.assert_allclose(r, q, atol=1e-12)
        assert res.max() < 1e-12

    def test_rank_deficient_gram_raises(self):
        with pytest.raises(DegenerateAlignmentError):
            procrustes_align(np.diag([1.0, 0.0]))

    def test_optimality_under_orthogonal_perturbation(self):
        rng = np.random.default_rng(8)
        m = rng.standard_normal((4, 4)) + 2.0 * np.eye(4)
        r, res = procrustes_align(m)
        best = np.trace(r.T @ m)
        for _ in range(20):
            skew = rng.standard_normal((4, 4)) * 0.05
            q = expm(skew - skew.T)
            assert np.trace((r @ q).T @ m) <= best + 1e-12


class TestAlignBlocks:
    def test_frame_shape_and_window(self, circle_frame):
        assert circle_frame.k_n == 11
        assert circle_frame.residuals.shape == (11,)
        assert circle_frame.delta_phi == circle_frame.residuals.max()
        assert circle_frame.basis.shape == (circle_frame.discrete.n, 11)
        assert circle_frame.discrete_on_aux.shape == (circle_frame.plan.G, 11)

    def test_constant_block_aligns_exactly(self, circle_frame):
        # the first eigenvector is the constant, whose cell extension pairs
        # with the constant eigenfunction with no quadrature error at all
        assert circle_frame.residuals[0] < 1e-6

    def test_residual_range_at_this_resolution(self, circle_frame):
        assert (circle_frame.residuals >= 0.0).all()
        assert (circle_frame.residuals <= 2.0).all()
        # n=240 with g=20 is coarse; alignment works but is far from tight
        assert circle_frame.delta_phi < 1.2

    def test_mixers_are_orthogonal(self, circle_frame):
        for r in circle_frame.mixers:
            np.testing.assert_allclose(r.T @ r, np.eye(len(r)), atol=1e-10)

    def test_canonical_basis_stays_orthonormal(self, circle_frame):
        n = circle_frame.discrete.n
        gram = circle_frame.basis.T @ circle_frame.basis / n
        assert np.abs(gram - np.eye(11)).max() < 1e-10

    def test_aligned_eigenfunctions_orthonormal_on_fine_grid(self, circle_frame):
        grid = Circle(1.0).quadrature(8192)
        vals = circle_frame.aligned_eigenfunctions(grid.points)
        gram = (vals * grid.weights[:, None]).T @ vals
        assert np.abs(gram - np.eye(11)).max() < 1e-10

    def test_rotation_invariance(self, circle_setup):
        cloud, plan, _, spec, table = circle_setup
        base = align_blocks(spec, plan, table, 11)

        th = 1.234
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        rcloud = PointCloud(points=cloud.points @ rot.T, manifold=cloud.manifold,
                            seed=cloud.seed)
        rplan = type(plan)(
            manifold=plan.manifold, centers=plan.centers @ rot.T,
            aux_points=plan.aux_points @ rot.T, assignment=plan.assignment,
            eps_hat=plan.eps_hat, seed=plan.seed, swaps=plan.swaps,
            converged=plan.converged)
        rlap = graph_laplacian(build_graph(rcloud, h=0.4))
        rspec = lowest_eigenpairs(rlap, 12)
        rframe = align_blocks(rspec, rplan, table, 11)
        np.testing.assert_allclose(rframe.residuals, base.residuals, atol=1e-8)

    def test_degenerate_cluster_basis_freedom(self, circle_setup):
        # force an exactly degenerate pair, then mix its eigenvectors by an
        # arbitrary rotation: the aligned residuals must not notice
        _, plan, _, spec, table = circle_setup
        vals = spec.eigenvalues[:11].copy()
        vals[1] = vals[2] = 0.5 * (vals[1] + vals[2])
        rng = np.random.default_rng(17)
        frames = []
        for _ in range(3):
            th = rng.uniform(0.0, 2.0 * np.pi)
            mix = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
            vecs = spec.eigenvectors[:, :11].copy()
            vecs[:, 1:3] = vecs[:, 1:3] @ mix
            sign = rng.choice([-1.0, 1.0], size=11)
            mixed = DiscreteSpectrum(vals, vecs * sign, spec.solver)
            frames.append(align_blocks(mixed, plan, table, 11))
        for f in frames[1:]:
            assert abs(f.delta_phi - frames[0].delta_phi) < 1e-10
            np.testing.assert_allclose(f.residuals, frames[0].residuals,
                                       atol=1e-10)

    def test_sign_flips_leave_residuals_alone(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        base = align_blocks(spec, plan, table, 11)
        flipped = DiscreteSpectrum(
            spec.eigenvalues[:11],
            spec.eigenvectors[:, :11] * np.array([1, -1, 1, -1, -1, 1, 1, -1, 1, -1, 1.0]),
            spec.solver)
        other = align_blocks(flipped, plan, table, 11)
        np.testing.assert_allclose(other.residuals, base.residuals, atol=1e-12)

    def test_duplicate_eigenvector_raises(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        n = spec.n
        v = spec.eigenvectors[:, 1]
        vecs = np.column_stack([np.ones(n), v, v])
        dup = DiscreteSpectrum(np.array([0.0, 0.1, 0.15]), vecs, "dense")
        with pytest.raises(DegenerateAlignmentError):
            align_blocks(dup, plan, table, 3)

    def test_explicit_partition_is_honored(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        part = BlockPartition(blocks=((0, 0), (1, 2)), straddle_count=0)
        frame = align_blocks(spec, plan, table, 3, partition=part)
        assert frame.partition is part
        assert frame.k_n == 3

    def test_short_spectrum_rejected(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        with pytest.raises(ValueError):
            align_blocks(spec, plan, table, spec.count + 1)


# ---------------------------------------------------------------------------
# error functional and per-mode report
# ---------------------------------------------------------------------------

class TestDeltaBound:
    def test_direct_substitution(self):
        assert delta_bound(0.01, 0.1, 4.0, curvature=0.0, reach=1.0) == \
            pytest.approx(0.41, abs=1e-12)

    def test_zero_eps_zero_lambda(self):
        h = 0.2
        assert delta_bound(0.0, h, 0.0, curvature=1.5, reach=2.0) == \
            pytest.approx(h + (1.5 + 0.25) * h * h)

    def test_monotone_in_lambda(self):
        lams = np.linspace(0.0, 30.0, 40)
        vals = [delta_bound(0.05, 0.3, l) for l in lams]
        assert (np.diff(vals) > 0).all()

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ValueError):
            delta_bound(0.1, 0.0, 1.0)
        with pytest.raises(ValueError):
            delta_bound(0.1, 0.2, 1.0, reach=0.0)


class TestEigenvalueReport:
    def test_identical_spectra_report_zero(self):
        table = Circle(1.0).spectrum(7)
        n = 64
        vecs = np.zeros((n, 7))
        vecs[:7, :7] = np.eye(7) * np.sqrt(n)
        spec = DiscreteSpectrum(table.eigenvalues.copy(), vecs, "dense")
        rows = eigenvalue_report(spec, table, 7, eps_hat=0.05, h=0.25)
        assert [r["k"] for r in rows] == list(range(1, 8))
        assert all(r["rel_err"] == 0.0 for r in rows)
        assert all(np.isfinite(r["ratio"]) for r in rows)

    def test_first_mode_uses_absolute_error(self):
        table = Circle(1.0).spectrum(3)
        vals = table.eigenvalues + np.array([0.01, 0.02, 0.02])
        vecs = np.zeros((32, 3))
        vecs[:3, :3] = np.eye(3) * np.sqrt(32)
        spec = DiscreteSpectrum(vals, vecs, "dense")
        rows = eigenvalue_report(spec, table, 3, eps_hat=0.05, h=0.25)
        assert rows[0]["rel_err"] == pytest.approx(0.01)
        assert rows[1]["rel_err"] == pytest.approx(0.02 / table.eigenvalues[1])

    def test_report_columns_and_delta(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        rows = eigenvalue_report(spec, table, 11, plan.eps_hat, 0.4)
        for r in rows:
            assert set(r) == {"k", "lambda_disc", "lambda_cont", "rel_err",
                              "delta", "ratio"}
            assert r["delta"] == pytest.approx(
                delta_bound(plan.eps_hat, 0.4, r["lambda_cont"]))

    def test_window_beyond_tables_rejected(self, circle_setup):
        _, plan, _, spec, table = circle_setup
        with pytest.raises(ValueError):
            eigenvalue_report(spec, table, spec.count + 1, plan.eps_hat, 0.4)


# ---------------------------------------------------------------------------
# convergence along a resolution ladder
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_ladder(circle_ladder):
    out = []
    for rung in circle_ladder:
        rows = eigenvalue_report(rung["spec"], rung["table"], 11,
                                 rung["plan"].eps_hat, rung["h"])
        out.append((rung["n"], rung["plan"], rung["frame"], rows))
    return out


class TestLadderTrends:
    def test_median_relative_error_decreases(self, small_ladder):
        meds = [np.median([r["rel_err"] for r in rows[1:]])
                for _, _, _, rows in small_ladder]
        assert (np.diff(meds) < 0).all()

    def test_delta_phi_trend(self, small_ladder):
        dphi = [frame.delta_phi for _, _, frame, _ in small_ladder]
        rho = spearmanr(np.arange(len(dphi)), dphi).statistic
        assert rho <= -0.8 + 1e-12

    def test_delta_bound_decreases_on_ladder(self, small_ladder):
        # eps/h = sqrt(eps) and h both shrink along the ladder, so the
        # functional evaluated at a fixed mode must shrink too
        lam = 4.0 / (2.0 * np.pi)
        deltas = [delta_bound(plan.eps_hat, np.sqrt(plan.eps_hat), lam)
                  for _, plan, _, _ in small_ladder]
        assert (np.diff(deltas) < 0).all()

    def test_ratio_column_bounded(self, small_ladder):
        per_rung = []
        for _, _, _, rows in small_ladder:
            per_rung.append(np.median([r["ratio"] for r in rows[1:]]))
        assert max(per_rung) / min(per_rung) < 10.0
