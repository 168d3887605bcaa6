"""Innovation window and the adaptive disturbance-noise update."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmae import InnovationWindow, NumericalError, innovation_cov_estimate, qd_update


def window_with(vectors, size=10):
    m = len(vectors[0])
    w = InnovationWindow(size, m)
    for v in vectors:
        w.push(np.asarray(v, dtype=float))
    return w


class TestInnovationWindow:
    def test_counts_up_to_capacity(self):
        w = InnovationWindow(3, 2)
        assert w.count == 0
        for i in range(5):
            w.push(np.array([float(i), 0.0]))
            assert w.count == min(i + 1, 3)

    def test_oldest_entries_evicted(self):
        w = window_with([[float(i), 0.0] for i in range(12)], size=10)
        firsts = sorted(w.values()[:, 0].tolist())
        assert firsts == [float(i) for i in range(2, 12)]

    def test_clear_resets(self):
        w = window_with([[1.0, 2.0]])
        w.clear()
        assert w.count == 0
        with pytest.raises(NumericalError):
            innovation_cov_estimate(w)


class TestInnovationCovEstimate:
    def test_single_entry_outer_product(self):
        g = np.array([1.0, -2.0])
        C = innovation_cov_estimate(window_with([g]))
        np.testing.assert_allclose(C, np.outer(g, g))

    def test_sign_symmetric_pair(self):
        g = np.array([3.0, 1.0])
        C = innovation_cov_estimate(window_with([g, -g]))
        np.testing.assert_allclose(C, np.outer(g, g))

    def test_warmup_divides_by_stored_count(self):
        # two entries in a ten-slot window: divisor is 2, not 10
        C = innovation_cov_estimate(window_with([[2.0, 0.0], [0.0, 0.0]], size=10))
        assert C[0, 0] == pytest.approx(2.0)

    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force_second_moment(self, seed):
        gen = np.random.default_rng(seed)
        vals = gen.standard_normal((10, 3))
        C = innovation_cov_estimate(window_with(list(vals), size=10))
        np.testing.assert_allclose(C, vals.T @ vals / 10.0, atol=1e-12)
        np.testing.assert_allclose(C, C.T, atol=1e-15)


class TestQdUpdate:
    def test_identity_channels_recover_residual(self):
        C_hat = np.diag([5.0, 7.0])
        Qd = qd_update(C_hat, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
        np.testing.assert_allclose(Qd, np.diag([5.0, 7.0]))

    def test_known_terms_subtracted(self):
        # C = H Q H^T + F Qf F^T + R + E Qd E^T with everything diagonal
        Q = np.diag([0.5, 0.5])
        Qf = np.diag([0.25, 0.25])
        R = np.diag([1.0, 1.0])
        target = np.diag([2.0, 3.0])
        C_hat = Q + Qf + R + target
        Qd = qd_update(C_hat, np.eye(2), np.eye(2), Q, np.eye(2), Qf, R)
        np.testing.assert_allclose(Qd, target, atol=1e-12)

    def test_scaled_disturbance_map(self):
        """Frozen case: residual diag(8, 32) through E = diag(2, 4)."""
        E = np.diag([2.0, 4.0])
        C_hat = np.diag([8.0, 32.0])
        # no fault channel at all: F has zero columns
        Qd = qd_update(C_hat, np.eye(2), E, np.zeros((2, 2)), np.zeros((2, 0)), np.zeros((0, 0)), np.zeros((2, 2)))
        np.testing.assert_allclose(Qd, np.diag([2.0, 2.0]), atol=1e-12)

    def test_deficit_clamps_to_zero(self):
        """Window covariance below the known noise floor must not go negative."""
        C_hat = np.diag([0.1, 0.1])
        R = np.diag([1.0, 1.0])
        Qd = qd_update(C_hat, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), R)
        np.testing.assert_array_equal(Qd, np.zeros((2, 2)))

    def test_result_is_diagonal(self):
        gen = np.random.default_rng(3)
        M = gen.standard_normal((2, 2))
        C_hat = M @ M.T
        Qd = qd_update(C_hat, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
        assert Qd[0, 1] == 0.0 and Qd[1, 0] == 0.0

    @given(st.integers(0, 2**32 - 1))
    def test_diagonal_nonnegative_for_any_window(self, seed):
        gen = np.random.default_rng(seed)
        M = gen.standard_normal((2, 2))
        C_hat = M @ M.T
        H = gen.standard_normal((2, 2)) + 3.0 * np.eye(2)
        E = gen.standard_normal((2, 2)) + 3.0 * np.eye(2)
        Qd = qd_update(C_hat, H, E, 1e-3 * np.eye(2), np.eye(2), 1e-4 * np.eye(2), 1e-2 * np.eye(2))
        assert np.diag(Qd).min() >= 0.0
        np.testing.assert_allclose(Qd, np.diag(np.diag(Qd)))

    @given(st.floats(0.1, 100.0))
    def test_homogeneous_in_residual_scale(self, scale):
        """Doubling the excess innovation power doubles the estimate."""
        C_hat = np.diag([4.0, 9.0])
        base = qd_update(C_hat, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
        scaled = qd_update(scale * C_hat, np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
        np.testing.assert_allclose(scaled, scale * base, rtol=1e-10)

    def test_singular_output_map_raises(self):
        H = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(NumericalError, match="H is singular"):
            qd_update(np.eye(2), H, np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_singular_disturbance_map_raises(self):
        E = np.zeros((2, 2))
        with pytest.raises(NumericalError, match="E is singular"):
            qd_update(np.eye(2), np.eye(2), E, np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_nonsquare_output_map_raises(self):
        H = np.ones((2, 3))
        with pytest.raises(NumericalError, match="square H"):
            qd_update(np.eye(2), H, np.eye(2), np.zeros((3, 3)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_step_appears_in_error(self):
        E = np.zeros((2, 2))
        with pytest.raises(NumericalError, match="step 42"):
            qd_update(np.eye(2), np.eye(2), E, np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), k=42)
