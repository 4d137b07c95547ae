"""Characteristic-function estimation, the CF discrepancy, MMD, and their
gradients, each checked against independent oracles."""

import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cfcondense import cf_engine as cf
from cfcondense.errors import ValidationError


def brute_force_cf(points, t):
    """Complex-arithmetic CF oracle for one frequency vector."""
    return sum(cmath.exp(1j * float(np.dot(t, z))) for z in points) / len(points)


def brute_force_cfd(a_pts, b_pts, freqs):
    vals = []
    for t in freqs.freqs:
        diff = brute_force_cf(a_pts, t) - brute_force_cf(b_pts, t)
        vals.append(abs(diff) ** 2)
    return sum(vals) / len(vals)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp = x.copy()
            xm = x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            g[i, j] = (f(xp) - f(xm)) / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-4):
    denom = np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, floor)])
    return float(np.max(np.abs(a - b) / denom))


class TestFrequencySampling:
    def test_gaussian_statistics(self):
        fb = cf.sample_frequencies(8, 4096, 1.0, seed=0)
        assert np.all(np.abs(fb.freqs.mean(axis=0)) < 0.1)
        var = fb.freqs.var(axis=0)
        assert np.all(var > 0.8) and np.all(var < 1.2)

    def test_deterministic(self):
        f1 = cf.sample_frequencies(5, 32, 2.0, seed=11)
        f2 = cf.sample_frequencies(5, 32, 2.0, seed=11)
        assert np.array_equal(f1.freqs, f2.freqs)

    def test_single_frequency_shape(self):
        fb = cf.sample_frequencies(7, 1, 0.5, seed=0)
        assert fb.freqs.shape == (1, 7)
        assert np.all(np.isfinite(fb.freqs))

    def test_bad_args(self):
        with pytest.raises(ValidationError):
            cf.sample_frequencies(3, 0, 1.0, seed=0)
        with pytest.raises(ValidationError):
            cf.sample_frequencies(3, 4, 0.0, seed=0)


class TestEmpiricalCF:
    def test_zero_point_gives_one(self):
        fb = cf.sample_frequencies(3, 16, 1.0, seed=0)
        out = cf.empirical_cf(np.zeros((1, 3)), fb)
        assert np.array_equal(out.real, np.ones(16))
        assert np.array_equal(out.imag, np.zeros(16))

    def test_symmetric_pair_is_real(self):
        z = np.array([0.7, -1.3])
        fb = cf.sample_frequencies(2, 32, 1.0, seed=1)
        out = cf.empirical_cf(np.vstack([z, -z]), fb)
        assert np.allclose(out.imag, 0.0, atol=1e-15)
        assert np.allclose(out.real, np.cos(fb.freqs @ z), atol=1e-15)

    def test_three_point_complex_oracle(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        t = np.array([np.pi / 2, np.pi])
        fb = cf.FrequencyBatch(t[None, :], 1.0)
        out = cf.empirical_cf(pts, fb)
        expected = brute_force_cf(pts, t)
        assert abs(out.real[0] - expected.real) < 1e-14
        assert abs(out.imag[0] - expected.imag) < 1e-14

    def test_dimension_mismatch(self):
        fb = cf.sample_frequencies(3, 4, 1.0, seed=0)
        with pytest.raises(ValidationError):
            cf.empirical_cf(np.zeros((2, 2)), fb)


class TestCfd:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((6, 3))
        fb = cf.sample_frequencies(3, 32, 1.0, seed=0)
        assert abs(cf.cfd(pts, pts.copy(), fb)) < 1e-12

    def test_single_frequency_analytic_value(self):
        # real = {0}, syn = {z} with t.z = pi gives |1 - e^{i pi}|^2 = 4
        z = np.array([[2.0]])
        fb = cf.FrequencyBatch(np.array([[np.pi / 2.0]]), 1.0)
        assert abs(cf.cfd(np.zeros((1, 1)), z, fb) - 4.0) < 1e-12

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            a = rng.standard_normal((6, 3))
            b = rng.standard_normal((6, 3))
            fb = cf.sample_frequencies(3, 16, 1.5, seed=rng.integers(1 << 30))
            got = cf.cfd(a, b, fb)
            want = brute_force_cfd(a, b, fb)
            assert abs(got - want) / max(abs(want), 1e-15) < 1e-12

    def test_decomposition_identity_per_frequency(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((5, 4))
        b = rng.standard_normal((7, 4))
        fb = cf.sample_frequencies(4, 64, 1.0, seed=9)
        cf_a = cf.empirical_cf(a, fb)
        cf_b = cf.empirical_cf(b, fb)
        amp_term, phase_term = cf._decomposed_terms(cf_a, cf_b)
        complex_sq = (cf_a.real - cf_b.real) ** 2 + (cf_a.imag - cf_b.imag) ** 2
        assert np.max(np.abs(amp_term + phase_term - complex_sq)) < 1e-12


class TestCfdGrad:
    def test_stationary_at_identity(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((5, 3))
        fb = cf.sample_frequencies(3, 16, 1.0, seed=2)
        grad = cf.cfd_grad(pts, pts.copy(), fb)
        assert np.linalg.norm(grad) <= 1e-8

    def test_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            real = rng.standard_normal((6, 3))
            syn = rng.standard_normal((4, 3))
            fb = cf.sample_frequencies(3, 8, 1.2, seed=rng.integers(1 << 30))
            g = cf.cfd_grad(real, syn, fb)
            g_fd = central_diff(lambda s: cf.cfd(real, s, fb), syn)
            assert max_rel_err(g, g_fd) < 1e-4

    def test_weighted_finite_differences(self):
        rng = np.random.default_rng(13)
        real = rng.standard_normal((5, 2))
        syn = rng.standard_normal((3, 2))
        fb = cf.sample_frequencies(2, 8, 1.0, seed=1)
        g = cf.cfd_grad(real, syn, fb, amp_weight=0.3, phase_weight=2.0)
        g_fd = central_diff(
            lambda s: cf.cfd(real, s, fb, amp_weight=0.3, phase_weight=2.0), syn
        )
        assert max_rel_err(g, g_fd) < 1e-4

    def test_scalar_closed_form(self):
        # 1-D, one synthetic point, one frequency, real = {z}:
        # d/dzt |e^{itz} - e^{it zt}|^2 = 2 t sin(t (zt - z))
        z, zt, t = 0.4, 1.1, 2.0
        fb = cf.FrequencyBatch(np.array([[t]]), 1.0)
        g = cf.cfd_grad(np.array([[z]]), np.array([[zt]]), fb)
        assert abs(g[0, 0] - 2 * t * np.sin(t * (zt - z))) < 1e-12

    def test_value_and_grad_consistent(self):
        rng = np.random.default_rng(21)
        real = rng.standard_normal((5, 3))
        syn = rng.standard_normal((4, 3))
        fb = cf.sample_frequencies(3, 16, 0.8, seed=3)
        value, grad = cf.cfd_value_and_grad(real, syn, fb)
        assert value == cf.cfd(real, syn, fb)
        assert np.array_equal(grad, cf.cfd_grad(real, syn, fb))


class TestMmd:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((6, 3))
        assert abs(cf.mmd(pts, pts.copy(), 1.0)) < 1e-12

    def test_singleton_closed_form(self):
        x = np.array([[1.0, 2.0]])
        y = np.array([[-0.5, 0.25]])
        sigma = 0.8
        d2 = float(np.sum((x - y) ** 2))
        expected = 2.0 - 2.0 * np.exp(-d2 / (2 * sigma**2))
        assert abs(cf.mmd(x, y, sigma) - expected) < 1e-12

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((5, 3))
        y = rng.standard_normal((7, 3))
        sigma = 1.3

        def k(a, b):
            return np.exp(-np.sum((a - b) ** 2) / (2 * sigma**2))

        krr = np.mean([[k(a, b) for b in x] for a in x])
        kss = np.mean([[k(a, b) for b in y] for a in y])
        krs = np.mean([[k(a, b) for b in y] for a in x])
        assert abs(cf.mmd(x, y, sigma) - (krr + kss - 2 * krs)) < 1e-12

    def test_grad_stationary_at_identity(self):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((5, 2))
        assert np.linalg.norm(cf.mmd_grad(pts, pts.copy(), 1.0)) <= 1e-8

    def test_grad_finite_differences(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            real = rng.standard_normal((6, 3))
            syn = rng.standard_normal((4, 3))
            g = cf.mmd_grad(real, syn, 0.9)
            g_fd = central_diff(lambda s: cf.mmd(real, s, 0.9), syn)
            assert max_rel_err(g, g_fd) < 1e-4

    def test_grad_vanishes_at_huge_bandwidth(self):
        rng = np.random.default_rng(29)
        real = rng.standard_normal((6, 3))
        syn = rng.standard_normal((4, 3))
        assert np.linalg.norm(cf.mmd_grad(real, syn, 1e6)) < 1e-6


_small_sets = st.integers(1, 6)
_dims = st.integers(1, 4)
_seeds = st.integers(0, 2**31 - 1)


class TestMetricAxioms:
    @settings(max_examples=60, deadline=None)
    @given(n=_small_sets, m=_small_sets, d=_dims, seed=_seeds)
    def test_cfd_axioms(self, n, m, d, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-3, 3, size=(n, d))
        b = rng.uniform(-3, 3, size=(m, d))
        fb = cf.sample_frequencies(d, 8, 1.0, seed=seed)
        ab = cf.cfd(a, b, fb)
        ba = cf.cfd(b, a, fb)
        assert ab >= -1e-15
        assert abs(ab - ba) < 1e-12
        assert abs(cf.cfd(a, a, fb)) < 1e-12
        perm_a = a[rng.permutation(n)]
        perm_b = b[rng.permutation(m)]
        assert abs(cf.cfd(perm_a, perm_b, fb) - ab) < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(n=_small_sets, d=_dims, seed=_seeds)
    def test_amplitude_bounded_and_cf_at_zero(self, n, d, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-4, 4, size=(n, d))
        freqs = np.vstack([np.zeros((1, d)), rng.standard_normal((7, d))])
        fb = cf.FrequencyBatch(freqs, 1.0)
        out = cf.empirical_cf(pts, fb)
        assert out.real[0] == 1.0 and out.imag[0] == 0.0
        assert np.all(out.amplitude <= 1.0 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(n=_small_sets, m=_small_sets, d=_dims, seed=_seeds)
    def test_mmd_permutation_invariance(self, n, m, d, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-3, 3, size=(n, d))
        b = rng.uniform(-3, 3, size=(m, d))
        base = cf.mmd(a, b, 1.1)
        shuffled = cf.mmd(a[rng.permutation(n)], b[rng.permutation(m)], 1.1)
        assert abs(base - shuffled) < 1e-12
        assert base >= -1e-12


class TestMonteCarloConsistency:
    def test_variance_shrinks_with_frequency_count(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((20, 4))
        b = rng.standard_normal((20, 4)) + 0.5
        stds = []
        for count in (256, 4096):
            vals = [
                cf.cfd(a, b, cf.sample_frequencies(4, count, 1.0, seed=s))
                for s in range(10)
            ]
            stds.append(np.std(vals))
        assert stds[1] < stds[0]


class TestMedianHeuristic:
    def test_known_value(self):
        pts = np.array([[0.0], [1.0], [3.0]])
        # pairwise distances 1, 2, 3 -> median 2
        assert cf.median_pairwise_distance(pts) == pytest.approx(2.0)

    def test_subsample_deterministic(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((600, 3))
        d1 = cf.median_pairwise_distance(pts, max_points=128, seed=4)
        d2 = cf.median_pairwise_distance(pts, max_points=128, seed=4)
        assert d1 == d2
