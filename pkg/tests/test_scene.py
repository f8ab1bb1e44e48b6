import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import knn_mean_brute
from scenes import grid_cluster, tiered_cloud
from splatlab.errors import EmptySceneError, InsufficientPointsError, InvalidParameterError
from splatlab.scene import (
    INITIAL_OPACITY,
    GaussianSet,
    PointCloud,
    SHBank,
    SHInitConfig,
    assign_sh_degree,
    build_covariance,
    eval_sh,
    fill_higher_bands,
    init_scene,
    init_sh_dc,
    init_sh_higher,
    knn_mean_distance,
    logit,
    prune,
    sh_variance_report,
)
from splatlab.sh import SH_C0, num_coeffs

finite = st.floats(-3, 3, allow_nan=False)


def small_set(opacities, degree=0):
    n = len(opacities)
    nu = num_coeffs(degree)
    return GaussianSet(np.arange(3 * n, dtype=float).reshape(n, 3), np.zeros((n, 3)),
                       np.tile([1.0, 0, 0, 0], (n, 1)), logit(np.asarray(opacities)),
                       np.zeros((n, nu, 3)), np.full(n, degree), degree)


class TestBuildCovariance:
    def test_identity(self):
        np.testing.assert_allclose(build_covariance([0, 0, 0], [1, 0, 0, 0]), np.eye(3), atol=1e-15)

    def test_axis_scales(self):
        cov = build_covariance(np.log([1.0, 2.0, 3.0]), [1, 0, 0, 0])
        np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 9.0]), atol=1e-12)

    def test_isotropic_rotation_invariant(self):
        q = [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)]
        np.testing.assert_allclose(build_covariance([0, 0, 0], q), np.eye(3), atol=1e-12)

    def test_rotation_permutes_axes(self):
        q = [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)]
        cov = build_covariance(np.log([1.0, 2.0, 3.0]), q)
        np.testing.assert_allclose(cov, np.diag([4.0, 1.0, 9.0]), atol=1e-12)

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(InvalidParameterError):
            build_covariance([0, 0, 0], [2, 0, 0, 0])

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidParameterError):
            build_covariance([np.nan, 0, 0], [1, 0, 0, 0])

    @given(arrays(float, 3, elements=finite), arrays(float, 4, elements=st.floats(-1, 1)))
    def test_symmetric_psd(self, s, q):
        if np.linalg.norm(q) < 1e-3:
            return
        cov = build_covariance(s, q / np.linalg.norm(q))
        np.testing.assert_array_equal(cov, cov.T)
        eig = np.linalg.eigvalsh(cov)
        assert eig.min() >= -1e-12 * max(1.0, eig.max())
        np.testing.assert_allclose(np.sort(eig), np.sort(np.exp(2 * s)), rtol=1e-9, atol=1e-12)


class TestEvalSH:
    def test_dc_white(self):
        bank = SHBank(0, [[1.7725, 1.7725, 1.7725]])
        np.testing.assert_allclose(eval_sh(bank, [0, 0, 1]), 1.0, atol=1e-4)
        assert np.all(eval_sh(bank, [0, 0, 1]) <= 1.0)

    def test_zero_is_mid_grey(self):
        np.testing.assert_array_equal(eval_sh(SHBank(2, np.zeros((9, 3))), [1, 0, 0]), 0.5)

    def test_z_coefficient_parity(self):
        c = np.zeros((4, 3))
        c[2] = 0.3
        up = eval_sh(SHBank(1, c), [0, 0, 1])
        down = eval_sh(SHBank(1, c), [0, 0, -1])
        np.testing.assert_allclose(up - 0.5, -(down - 0.5), atol=1e-15)
        assert up[0] > 0.5

    def test_rejects_non_unit_direction(self):
        with pytest.raises(InvalidParameterError):
            eval_sh(SHBank(0, np.zeros((1, 3))), [0, 0, 2])

    @given(arrays(float, (4, 3), elements=st.floats(-1, 1)), st.integers(2, 4))
    def test_zero_padding_invariant(self, c, extra):
        d = np.array([0.6, -0.0, 0.8])
        padded = np.zeros((num_coeffs(extra), 3))
        padded[:4] = c
        np.testing.assert_allclose(eval_sh(SHBank(1, c), d), eval_sh(SHBank(extra, padded), d),
                                   atol=1e-14)


class TestKnn:
    def test_two_points(self):
        cloud = PointCloud([[0, 0, 0], [1, 0, 0]], np.zeros((2, 3)))
        np.testing.assert_allclose(knn_mean_distance(cloud, 1), [1.0, 1.0])

    def test_collinear(self):
        cloud = PointCloud([[0, 0, 0], [1, 0, 0], [3, 0, 0]], np.zeros((3, 3)))
        np.testing.assert_allclose(knn_mean_distance(cloud, 1), [1.0, 1.0, 2.0])

    def test_median_normaliser(self, rng):
        cloud = PointCloud(rng.normal(size=(31, 3)), np.zeros((31, 3)))
        assert np.median(knn_mean_distance(cloud, 1, "median")) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_brute_force(self, rng, k):
        pts = rng.normal(size=(60, 3))
        cloud = PointCloud(pts, np.zeros_like(pts))
        np.testing.assert_allclose(knn_mean_distance(cloud, k), knn_mean_brute(pts, k), rtol=1e-12)

    def test_too_few_points(self):
        with pytest.raises(InsufficientPointsError):
            knn_mean_distance(PointCloud([[0, 0, 0], [1, 0, 0]], np.zeros((2, 3))), 3)


class TestAssignDegree:
    @pytest.mark.parametrize("d, expected", [(3, (3, 16)), (0.2, (1, 4)), (9.7, (5, 36)),
                                             (2.5, (3, 16)), (2.49, (2, 9))])
    def test_examples(self, d, expected):
        assert assign_sh_degree(d, 5) == expected

    @given(st.floats(0, 1e6), st.integers(1, 8))
    def test_bounds(self, d, M):
        D, nu = assign_sh_degree(d, M)
        assert 1 <= D <= M and nu == (D + 1) ** 2


class TestInitDC:
    def test_opacity_weighted_red(self):
        c = init_sh_dc([1.0, 0.0, 0.0], 0.5)
        np.testing.assert_allclose(eval_sh(SHBank(0, c), [0, 0, 1]), [0.5, 0, 0], atol=1e-15)

    def test_nearly_opaque_keeps_colour(self):
        c = init_sh_dc([0.3, 0.3, 0.3], 1.0 - 1e-12)
        np.testing.assert_allclose(0.5 + SH_C0 * c, 0.3, atol=1e-11)

    def test_nearly_transparent_goes_black(self):
        c = init_sh_dc([0.9, 0.2, 0.7], 1e-12)
        np.testing.assert_allclose(0.5 + SH_C0 * c, 0.0, atol=1e-11)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_opacity_range(self, alpha):
        with pytest.raises(InvalidParameterError):
            init_sh_dc([0.5, 0.5, 0.5], alpha)


class TestInitHigher:
    def test_half_at_ln2(self):
        np.testing.assert_allclose(init_sh_higher([1, 1, 1], 1.0, np.log(2), 1.0), 0.5, rtol=1e-15)

    def test_zero_distance(self):
        assert np.all(init_sh_higher([0.3, 0.8, 0.1], 0.5, 0.0, 1.0) == 0.0)

    def test_far_limit(self):
        np.testing.assert_allclose(init_sh_higher([0.2, 0.4, 0.6], 0.5, 1e3, 1.0), [0.1, 0.2, 0.3])

    def test_uniform_fill_is_damped(self):
        c = fill_higher_bands(np.zeros((16, 3)), np.array([0.3, 0.6, 0.9]), 2)
        np.testing.assert_allclose(c[1:9], np.tile([0.3, 0.6, 0.9], (8, 1)) / 8)
        assert np.all(c[0] == 0) and np.all(c[9:] == 0)

    def test_single_fill(self):
        c = fill_higher_bands(np.zeros((16, 3)), np.array([0.3, 0.6, 0.9]), 2, "single")
        np.testing.assert_array_equal(c[8], [0.3, 0.6, 0.9])
        assert np.count_nonzero(c) == 3


class TestInitScene:
    def test_standard(self, rng):
        cloud = PointCloud(rng.normal(size=(20, 3)), rng.uniform(size=(20, 3)))
        g = init_scene(cloud, SHInitConfig(max_degree=3))
        assert len(g) == 20 and np.all(g.sh_degrees == 3)
        np.testing.assert_allclose(g.opacities, INITIAL_OPACITY)
        np.testing.assert_allclose(0.5 + SH_C0 * g.sh_coeffs[:, 0], cloud.colors, atol=1e-15)
        assert np.all(g.sh_coeffs[:, 1:] == 0)
        np.testing.assert_allclose(np.exp(g.log_scales[:, 0]), knn_mean_brute(cloud.positions, 3))
        np.testing.assert_array_equal(sh_variance_report(g)[1:], 0.0)

    def test_dynamic_degrees_follow_spacing(self, rng):
        cloud = tiered_cloud(rng)
        g = init_scene(cloud, SHInitConfig(max_degree=5), mode="dynamic")
        np.testing.assert_array_equal(np.unique(g.sh_degrees), [1, 2, 3])
        assert np.all(g.sh_coeffs[~g.coeff_mask()] == 0)
        var = sh_variance_report(g)
        assert np.all(var[1:4] > 0)
        np.testing.assert_array_equal(var[4:], 0.0)

    def test_dynamic_varied_colour_positive_variance(self, rng):
        cloud = tiered_cloud(rng, spacings=(2.0, 2.0, 3.0), counts=(1, 1, 1))
        g = init_scene(cloud, SHInitConfig(distance_normalizer="none"), mode="dynamic")
        assert np.all(g.sh_degrees >= 2)
        var = sh_variance_report(g)
        assert var[1] > 0 and var[2] > 0

    def test_dynamic_single_colour(self, rng):
        pts = grid_cluster(1.0, (0, 0, 0))
        cloud = PointCloud(pts, np.full(pts.shape, 0.4))
        g = init_scene(cloud, mode="dynamic")
        assert sh_variance_report(g)[1] == 0.0

    def test_single_fill_switch(self, rng):
        cloud = tiered_cloud(rng)
        g = init_scene(cloud, SHInitConfig(higher_fill="single"), mode="dynamic")
        for i in range(len(g)):
            nu = num_coeffs(g.sh_degrees[i])
            assert np.all(g.sh_coeffs[i, 1:nu - 1] == 0)

    def test_unknown_mode(self, rng):
        cloud = PointCloud(rng.normal(size=(5, 3)), np.zeros((5, 3)))
        with pytest.raises(InvalidParameterError):
            init_scene(cloud, mode="fancy")


class TestPrune:
    def test_threshold_example(self):
        g = small_set([0.004, 0.3, 0.0049])
        out = prune(g, 0.005)
        assert len(out) == 1
        np.testing.assert_allclose(out.opacities, [0.3])
        np.testing.assert_array_equal(out.positions, g.positions[1:2])

    def test_zero_threshold_is_identity(self):
        g = small_set([0.004, 0.3])
        assert prune(g, 0.0) is g

    def test_nothing_below(self):
        g = small_set([0.5, 0.5, 0.5])
        out = prune(g, 0.005)
        np.testing.assert_array_equal(out.opacity_logits, g.opacity_logits)

    def test_all_removed(self):
        with pytest.raises(EmptySceneError):
            prune(small_set([0.001, 0.002]), 0.005)

    @given(st.lists(st.floats(0.0001, 0.9999), min_size=1, max_size=20), st.floats(0, 0.5))
    def test_idempotent(self, ops, t):
        g = small_set(ops)
        try:
            once = prune(g, t)
        except EmptySceneError:
            return
        twice = prune(once, t)
        np.testing.assert_array_equal(once.opacity_logits, twice.opacity_logits)
        assert np.all(once.opacities >= t)
        assert len(once) == int(np.sum(g.opacities >= t))


class TestVarianceReport:
    def test_identical_coefficients(self):
        g = small_set([0.5, 0.5], degree=2)
        g.sh_coeffs[:] = 0.7
        # pooled per band: every band holds one repeated value
        np.testing.assert_array_equal(sh_variance_report(g), 0.0)

    def test_two_dc_values(self):
        g = small_set([0.5, 0.5])
        a = np.array([0.1, 0.2, 0.3])
        b = np.array([0.5, -0.2, 0.9])
        g.sh_coeffs[0, 0], g.sh_coeffs[1, 0] = a, b
        vals = np.concatenate([a, b])
        expected = np.mean((vals - vals.mean()) ** 2)
        assert sh_variance_report(g)[0] == pytest.approx(expected, rel=1e-14)
