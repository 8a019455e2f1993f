import math

import numpy as np
import pytest
from scipy import stats

from bayesrob.errors import KappaOutOfRange, ResolutionTooCoarse, UnsupportedNorm
from bayesrob.kernels import (
    VicinityKernel,
    discretize_stencil,
    kernel_pdf,
    kernel_volume,
    orthant_shell_bins,
    parse_p,
    sample_offset,
    shrink_kernel,
)


class TestVolume:
    def test_unit_square(self):
        assert kernel_volume(math.inf, 2, 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_unit_disk(self):
        assert kernel_volume(2, 2, 1.0) == pytest.approx(math.pi, rel=1e-14)

    def test_l1_diamond_matches_monte_carlo(self):
        # oracle: fraction of the bounding square [-1, 1]^2 inside |x|+|y| <= 1
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1.0, 1.0, size=(1_000_000, 2))
        mc = 4.0 * np.mean(np.abs(pts).sum(axis=1) <= 1.0)
        assert kernel_volume(1, 2, 1.0) == pytest.approx(2.0, rel=1e-14)
        assert mc == pytest.approx(2.0, rel=0.01)

    def test_l2_ball_3d(self):
        assert kernel_volume(2, 3, 2.0) == pytest.approx(4 / 3 * math.pi * 8, rel=1e-13)

    @pytest.mark.parametrize("p", [1, 2, math.inf])
    def test_scales_as_eps_to_the_n(self, p):
        assert kernel_volume(p, 3, 0.3) / kernel_volume(p, 3, 0.1) == pytest.approx(27.0)


class TestPdf:
    def test_box_centre(self):
        assert kernel_pdf(VicinityKernel(math.inf, 0.5, 1), 0.0) == 1.0

    def test_box_outside(self):
        assert kernel_pdf(VicinityKernel(math.inf, 0.5, 1), 0.6) == 0.0

    def test_disk_inside(self):
        k = VicinityKernel(2, 1.0, 2)
        assert kernel_pdf(k, [0.6, 0.6]) == pytest.approx(1 / math.pi)

    def test_vectorised(self):
        k = VicinityKernel(1, 1.0, 2)
        out = kernel_pdf(k, [[0.5, 0.4], [0.6, 0.6]])
        np.testing.assert_allclose(out, [0.5, 0.0])


class TestParse:
    @pytest.mark.parametrize("text,value", [("inf", math.inf), ("1", 1.0), (2, 2.0), (math.inf, math.inf)])
    def test_accepts(self, text, value):
        assert parse_p(text) == value

    def test_rejects_p3(self):
        with pytest.raises(UnsupportedNorm):
            parse_p(3)

    def test_kernel_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            VicinityKernel(math.inf, 0.0, 1)


class TestStencil:
    def test_box_quarter_cells(self):
        st = discretize_stencil(VicinityKernel(math.inf, 0.5, 1), [0.25])
        np.testing.assert_allclose(st.weights, [0.125, 0.25, 0.25, 0.25, 0.125], atol=1e-15)
        assert st.radius == (2,)

    def test_box_one_cell_wide(self):
        # eps equal to one cell: the box [-h, h] covers the centre cell and half of each neighbour
        st = discretize_stencil(VicinityKernel(math.inf, 0.1, 1), [0.1])
        np.testing.assert_allclose(st.weights, [0.25, 0.5, 0.25], atol=1e-15)

    def test_box_shifted_half_cell(self):
        st = discretize_stencil(VicinityKernel(math.inf, 0.1, 1), [0.2], center=[0.5])
        d = st.as_dict()
        assert d[(0,)] == pytest.approx(0.5)
        assert d[(1,)] == pytest.approx(0.5)

    def test_box_is_separable_product(self):
        st = discretize_stencil(VicinityKernel(math.inf, 0.3, 2), [0.1, 0.07])
        np.testing.assert_allclose(st.weights, np.multiply.outer(*st.axis_weights))

    @pytest.mark.parametrize("p", [1, 2, math.inf])
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_weights_sum_to_one(self, p, dim):
        st = discretize_stencil(VicinityKernel(p, 0.5, dim), [0.1] * dim)
        assert st.weights.sum() == pytest.approx(1.0, abs=1e-10)
        assert np.all(st.weights >= 0)

    @pytest.mark.parametrize("p", [1, 2])
    def test_floor_enforced_for_supersampled_norms(self, p):
        with pytest.raises(ResolutionTooCoarse):
            discretize_stencil(VicinityKernel(p, 0.5, 2), [0.2, 0.05])

    def test_box_has_no_floor(self):
        st = discretize_stencil(VicinityKernel(math.inf, 0.05, 1), [0.2])
        assert st.weights.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1, 2])
    def test_supersampling_converges(self, p):
        k = VicinityKernel(p, 0.5, 2)
        coarse = discretize_stencil(k, [0.05, 0.05], subdivisions=4).weights
        fine = discretize_stencil(k, [0.05, 0.05], subdivisions=8).weights
        assert np.max(np.abs(coarse - fine)) < 1e-3

    def test_symmetry(self):
        w = discretize_stencil(VicinityKernel(2, 0.5, 2), [0.05, 0.05]).weights
        np.testing.assert_allclose(w, w[::-1, :])
        np.testing.assert_allclose(w, w[:, ::-1])
        np.testing.assert_allclose(w, w.T)


class TestSampling:
    def test_box_support(self):
        rng = np.random.default_rng(0)
        pts = sample_offset(VicinityKernel(math.inf, 0.15, 2), rng, size=10_000)
        assert np.all(np.abs(pts) <= 0.15)

    def test_box_mean_within_three_sigma(self):
        eps, n = 0.15, 100_000
        pts = sample_offset(VicinityKernel(math.inf, eps, 2), np.random.default_rng(1), size=n)
        sigma = eps / math.sqrt(3 * n)
        assert np.all(np.abs(pts.mean(axis=0)) < 3 * sigma)

    def test_disk_inner_fraction(self):
        pts = sample_offset(VicinityKernel(2, 1.0, 2), np.random.default_rng(2), size=100_000)
        frac = np.mean(np.linalg.norm(pts, axis=1) <= 0.5)
        assert frac == pytest.approx(0.25, abs=0.01)

    @pytest.mark.parametrize("p", [1, 2, math.inf])
    def test_chi_square_uniformity(self, p):
        k = VicinityKernel(p, 0.7, 2)
        pts = sample_offset(k, np.random.default_rng(3), size=100_000)
        counts = np.bincount(orthant_shell_bins(k, pts), minlength=8)
        assert len(counts) == 8
        assert stats.chisquare(counts).pvalue > 1e-3

    @pytest.mark.parametrize("p", [1, 2])
    def test_inside_ball(self, p):
        k = VicinityKernel(p, 0.4, 3)
        pts = sample_offset(k, np.random.default_rng(4), size=5000)
        assert np.all(k.contains(pts))

    def test_deterministic_given_seed(self):
        k = VicinityKernel(1, 0.4, 2)
        a = sample_offset(k, np.random.default_rng(11), size=10)
        b = sample_offset(k, np.random.default_rng(11), size=10)
        np.testing.assert_array_equal(a, b)

    def test_single_draw_shape(self):
        assert sample_offset(VicinityKernel(2, 1.0, 3), np.random.default_rng(0)).shape == (3,)


class TestShrink:
    def test_one_dim(self):
        assert shrink_kernel(VicinityKernel(math.inf, 0.15, 1), 0.1).epsilon == pytest.approx(0.12)

    def test_two_dim(self):
        eps = shrink_kernel(VicinityKernel(math.inf, 0.15, 2), 0.1).epsilon
        assert eps == pytest.approx(0.15 * (1 - math.sqrt(0.2)), rel=1e-12)
        assert eps == pytest.approx(0.082918, abs=1e-6)

    @pytest.mark.parametrize("dim", [1, 2, 5])
    def test_kappa_zero_is_identity(self, dim):
        assert shrink_kernel(VicinityKernel(math.inf, 0.3, dim), 0.0).epsilon == 0.3

    @pytest.mark.parametrize("kappa", [-0.1, 0.5, 0.6])
    def test_kappa_range(self, kappa):
        with pytest.raises(KappaOutOfRange):
            shrink_kernel(VicinityKernel(math.inf, 0.3, 1), kappa)

    def test_rejects_l2(self):
        with pytest.raises(UnsupportedNorm):
            shrink_kernel(VicinityKernel(2, 0.3, 2), 0.1)

    def test_vanishes_near_half(self):
        assert shrink_kernel(VicinityKernel(math.inf, 0.3, 2), 0.4999999).epsilon < 1e-3
