"""Block-partitioned Kalman primitives: predict, update, likelihood."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from dmae import (
    GaussianBelief,
    NumericalError,
    Partition,
    build_no_fault_model,
    log_likelihood,
    predict,
    update,
)


def belief_1d(mean, var):
    return GaussianBelief(
        np.array([float(mean)]), np.array([[float(var)]]), Partition(1, 0, 0)
    )


class TestPartition:
    def test_slices(self):
        p = Partition(2, 2, 2)
        assert (p.x, p.d, p.f) == (slice(0, 2), slice(2, 4), slice(4, 6))
        assert p.xd == slice(0, 4)
        assert p.dim == 6

    def test_without_fault(self):
        p = Partition(3, 1, 2).without_fault()
        assert p.n_f == 0
        assert p.dim == 4
        assert p.f == slice(4, 4)


class TestGaussianBelief:
    def test_asymmetric_cov_rejected(self):
        cov = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            GaussianBelief(np.zeros(2), cov, Partition(2, 0, 0))

    def test_copy_is_independent(self):
        b = belief_1d(1.0, 2.0)
        c = b.copy()
        c.mean[0] = 99.0
        c.cov[0, 0] = 99.0
        assert b.mean[0] == 1.0
        assert b.cov[0, 0] == 2.0

    def test_block_accessors(self):
        p = Partition(1, 1, 1)
        mean = np.array([1.0, 2.0, 3.0])
        cov = np.diag([4.0, 5.0, 6.0])
        b = GaussianBelief(mean, cov, p)
        assert b.block_mean(p.d) == pytest.approx([2.0])
        np.testing.assert_allclose(b.block_cov(p.f, p.f), [[6.0]])

    def test_min_eig(self):
        b = GaussianBelief(np.zeros(2), np.diag([3.0, 7.0]), Partition(2, 0, 0))
        assert b.min_eig() == pytest.approx(3.0)


class TestPredict:
    def test_identity_dynamics_no_noise(self):
        b = belief_1d(2.0, 3.0)
        out = predict(b, np.eye(1), np.zeros((1, 1)))
        assert out.mean == pytest.approx([2.0])
        np.testing.assert_allclose(out.cov, [[3.0]])

    def test_scalar_propagation(self):
        # var' = a^2 var + q = 4*1 + 3
        out = predict(belief_1d(1.5, 1.0), np.array([[2.0]]), np.array([[3.0]]))
        assert out.mean == pytest.approx([3.0])
        np.testing.assert_allclose(out.cov, [[7.0]])

    def test_input_offset(self):
        out = predict(belief_1d(1.0, 1.0), np.eye(1), np.zeros((1, 1)), bu=np.array([0.25]))
        assert out.mean == pytest.approx([1.25])

    def test_matches_direct_formula_on_benchmark(self, bench_model):
        """Kernel output against A P A^T + Q computed longhand."""
        aug = build_no_fault_model(bench_model, 0.01 * np.eye(2), 0)
        gen = np.random.default_rng(11)
        mean = gen.standard_normal(4)
        M = gen.standard_normal((4, 4))
        cov = M @ M.T + 0.1 * np.eye(4)
        b = GaussianBelief(mean, cov, aug.partition)
        out = predict(b, aug.Abar, aug.Qbar)
        np.testing.assert_allclose(out.mean, aug.Abar @ mean, rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            out.cov, aug.Abar @ cov @ aug.Abar.T + aug.Qbar, rtol=0, atol=1e-12
        )


class TestUpdate:
    def test_scalar_precision_weighting(self):
        """Textbook 1-D fusion: prior (0, 4) with observation (2, 1)."""
        out = update(belief_1d(0.0, 4.0), np.array([2.0]), np.eye(1), np.array([[1.0]]))
        assert out.posterior.mean == pytest.approx([1.6])
        np.testing.assert_allclose(out.posterior.cov, [[0.8]])
        assert out.innovation == pytest.approx([2.0])
        np.testing.assert_allclose(out.innovation_cov, [[5.0]])
        np.testing.assert_allclose(out.gain, [[0.8]])

    def test_zero_output_map_leaves_prior(self):
        b = belief_1d(1.0, 2.0)
        out = update(b, np.array([5.0]), np.zeros((1, 1)), np.array([[1.0]]))
        assert out.posterior.mean == pytest.approx([1.0])
        np.testing.assert_allclose(out.posterior.cov, [[2.0]])
        np.testing.assert_allclose(out.gain, [[0.0]])
        assert out.innovation == pytest.approx([5.0])

    def test_fault_gain_approaches_inverse_output_map(self):
        """With H = [1, 1] and prior diag(s, p), the gain row for the second
        block is p / (s + p + r); it tends to 1 as p grows."""
        s, r = 1.0, 0.1
        for p, tol in ((1e2, 2e-2), (1e6, 2e-6)):
            belief = GaussianBelief(
                np.zeros(2), np.diag([s, p]), Partition(1, 0, 1)
            )
            out = update(belief, np.array([1.0]), np.array([[1.0, 1.0]]), np.array([[r]]))
            expected = p / (s + p + r)
            assert out.gain[1, 0] == pytest.approx(expected, abs=1e-14)
            assert abs(out.gain[1, 0] - 1.0) < tol

    @given(st.integers(0, 2**32 - 1))
    def test_posterior_cov_stays_psd(self, seed):
        """Joseph-form update must not produce negative eigenvalues."""
        gen = np.random.default_rng(seed)
        dim, m = 4, 2
        M = gen.standard_normal((dim, dim))
        cov = M @ M.T
        b = GaussianBelief(gen.standard_normal(dim), cov, Partition(dim, 0, 0))
        H = gen.standard_normal((m, dim))
        Rm = gen.standard_normal((m, m))
        R = Rm @ Rm.T + 1e-3 * np.eye(m)
        out = update(b, gen.standard_normal(m), H, R)
        assert np.linalg.eigvalsh(out.posterior.cov).min() >= -1e-10
        np.testing.assert_allclose(out.posterior.cov, out.posterior.cov.T, atol=1e-12)

    def test_huge_measurement_noise_ignores_observation(self):
        out = update(belief_1d(1.0, 1.0), np.array([100.0]), np.eye(1), np.array([[1e12]]))
        assert out.posterior.mean == pytest.approx([1.0], abs=1e-9)
        np.testing.assert_allclose(out.posterior.cov, [[1.0]], atol=1e-9)

    def test_singular_innovation_cov_raises_with_step(self):
        b = belief_1d(0.0, 0.0)
        with pytest.raises(NumericalError, match="step 7"):
            update(b, np.array([1.0]), np.eye(1), np.zeros((1, 1)), step=7)


class TestLogLikelihood:
    def test_frozen_two_channel_value(self):
        ll = log_likelihood(np.array([2.0, 0.0]), 4.0 * np.eye(2))
        assert ll == pytest.approx(-3.724171427529236, abs=1e-12)

    def test_standard_normal_origin(self):
        # -0.5 * log(2 pi)
        ll = log_likelihood(np.zeros(1), np.eye(1))
        assert ll == pytest.approx(-0.9189385332046727, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_agrees_with_scipy(self, seed):
        gen = np.random.default_rng(seed)
        m = int(gen.integers(1, 5))
        M = gen.standard_normal((m, m))
        C = M @ M.T + 0.5 * np.eye(m)
        gamma = gen.standard_normal(m)
        expected = multivariate_normal.logpdf(gamma, mean=np.zeros(m), cov=C)
        assert log_likelihood(gamma, C) == pytest.approx(expected, abs=1e-9)

    def test_density_integrates_to_one(self):
        c = 0.8
        ys = np.linspace(-12.0, 12.0, 4801)
        dens = np.array([np.exp(log_likelihood(np.array([y]), np.array([[c]]))) for y in ys])
        assert np.trapezoid(dens, ys) == pytest.approx(1.0, abs=1e-5)


def test_filter_covariance_settles(bench_model):
    """Predict/update iteration on the augmented plant reaches a fixed point."""
    aug = build_no_fault_model(bench_model, 0.01 * np.eye(2), 0)
    belief = GaussianBelief(np.zeros(4), np.eye(4), aug.partition)
    y = np.zeros(2)
    prev_trace = np.inf
    for _ in range(400):
        belief = predict(belief, aug.Abar, aug.Qbar)
        out = update(belief, y, aug.Hbar, bench_model.R(0))
        belief = out.posterior
        last_delta = abs(np.trace(belief.cov) - prev_trace)
        prev_trace = np.trace(belief.cov)
    assert last_delta < 1e-12
