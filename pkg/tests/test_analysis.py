"""Metrics, the fault-error bound, and the noise-mismatch sweep."""

import csv
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import dmae.analysis as analysis
from dmae import run_dmae
from dmae.analysis import (
    REFERENCE_RMSE,
    ErrorBoundInputs,
    fault_error_bound,
    rmse,
    schedule_edges,
    sensitivity_sweep,
    steady_state_rmse,
    summarize_run,
    switch_times,
    write_results_table,
    write_sweep_csv,
    write_sweep_detail_csv,
)


class TestRmse:
    def test_hand_value(self):
        est = np.array([[1.0], [2.0]])
        truth = np.zeros((2, 1))
        assert rmse(est, truth)[0] == pytest.approx(np.sqrt(2.5))

    def test_burn_in_drops_prefix(self):
        est = np.array([[100.0], [1.0], [1.0]])
        truth = np.zeros((3, 1))
        assert rmse(est, truth, burn_in=1)[0] == pytest.approx(1.0)

    def test_per_channel(self):
        est = np.array([[1.0, 0.0], [1.0, 0.0]])
        truth = np.zeros((2, 2))
        np.testing.assert_allclose(rmse(est, truth), [1.0, 0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            rmse(np.zeros((3, 1)), np.zeros((4, 1)))

    def test_burn_in_bounds_checked(self):
        with pytest.raises(ValueError, match="burn_in"):
            rmse(np.zeros((3, 1)), np.zeros((3, 1)), burn_in=3)

    @given(st.integers(0, 2**32 - 1))
    def test_invariant_under_step_permutation(self, seed):
        gen = np.random.default_rng(seed)
        est = gen.standard_normal((20, 2))
        truth = gen.standard_normal((20, 2))
        perm = gen.permutation(20)
        np.testing.assert_allclose(rmse(est, truth), rmse(est[perm], truth[perm]), atol=1e-12)


class TestScheduleEdges:
    def test_reference_profile(self, example1_cfg):
        assert schedule_edges(example1_cfg.faults) == [100, 150, 250, 350, 400]

    def test_empty(self):
        assert schedule_edges([]) == []


class TestSteadyStateRmse:
    def test_masks_transients(self):
        truth = np.zeros((10, 1))
        est = np.zeros((10, 1))
        est[5] = est[6] = 100.0  # inside the transient window after the edge
        est[8] = 3.0
        out = steady_state_rmse(est, truth, edges=[5], burn_in=2, transient=2)
        # surviving steps: 2, 3, 4, 7, 8, 9
        assert out[0] == pytest.approx(np.sqrt(9.0 / 6.0))

    def test_all_masked_rejected(self):
        with pytest.raises(ValueError, match="no steps left"):
            steady_state_rmse(np.zeros((5, 1)), np.zeros((5, 1)), edges=[0], burn_in=0, transient=5)


class TestSwitchTimes:
    def make_log(self, f, i_max):
        return SimpleNamespace(f=np.asarray(f, dtype=float), i_max=np.asarray(i_max))

    def test_detection_delays(self):
        f = np.zeros((10, 1))
        f[3:7] = 1.0
        i_max = np.array([1, 1, 1, 1, 1, 2, 2, 2, 1, 1])
        out = switch_times(self.make_log(f, i_max))
        assert out["onsets"] == [(3, 2)]
        assert out["removals"] == [(7, 1)]

    def test_missed_detection_is_none(self):
        f = np.zeros((6, 1))
        f[2:] = 1.0
        i_max = np.ones(6, dtype=int)
        out = switch_times(self.make_log(f, i_max))
        assert out["onsets"] == [(2, None)]
        assert out["removals"] == []

    def test_fault_active_at_start(self):
        f = np.ones((4, 1))
        i_max = np.array([2, 2, 2, 2])
        out = switch_times(self.make_log(f, i_max))
        assert out["onsets"] == [(0, 0)]


class TestFaultErrorBound:
    def test_unit_inputs(self):
        """All interval endpoints at 1: both ends evaluate to 5."""
        ones = (1.0, 1.0)
        b = ErrorBoundInputs(a=ones, f=ones, h=ones, e=ones, ex=ones, ed=ones, w=ones, wd=ones, v=ones)
        assert fault_error_bound(b) == (5.0, 5.0)

    def test_scaling_in_fault_map(self):
        ones = (1.0, 1.0)
        b = ErrorBoundInputs(a=ones, f=(2.0, 2.0), h=ones, e=ones, ex=ones, ed=ones, w=ones, wd=ones, v=ones)
        assert fault_error_bound(b) == (2.5, 2.5)

    def test_zero_errors_zero_bound(self):
        z = (0.0, 0.0)
        b = ErrorBoundInputs(a=(1.0, 1.0), f=(1.0, 1.0), h=(1.0, 1.0), e=(1.0, 1.0), ex=z, ed=z, w=z, wd=z, v=z)
        assert fault_error_bound(b) == (0.0, 0.0)

    def test_nonpositive_fault_map_rejected(self):
        ones = (1.0, 1.0)
        with pytest.raises(ValueError, match="f lower"):
            ErrorBoundInputs(a=ones, f=(0.0, 1.0), h=ones, e=ones, ex=ones, ed=ones, w=ones, wd=ones, v=ones)

    def test_sign_mixed_endpoints_can_invert(self):
        """Documented edge: endpoint products are not case-analyzed, so
        sign-mixed inputs may return lower > upper."""
        z = (0.0, 0.0)
        b = ErrorBoundInputs(
            a=(-1.0, 0.0), f=(1.0, 1.0), h=(1.0, 1.0), e=z, ex=(-1.0, 0.0), ed=z, w=z, wd=z, v=z
        )
        lo, hi = fault_error_bound(b)
        assert (lo, hi) == (1.0, 0.0)
        assert lo > hi

    @given(
        st.tuples(*[st.floats(0.0, 10.0) for _ in range(8)]),
        st.floats(0.1, 10.0),
        st.tuples(*[st.floats(0.0, 10.0) for _ in range(9)]),
    )
    def test_ordered_for_nonnegative_inputs(self, lows, f_lo, deltas):
        """With every interval nonnegative and ordered, the bound is ordered."""
        names = ["a", "h", "e", "ex", "ed", "w", "wd", "v"]
        kw = {n: (lo, lo + d) for n, lo, d in zip(names, lows, deltas)}
        kw["f"] = (f_lo, f_lo + deltas[8])
        lo, hi = fault_error_bound(ErrorBoundInputs(**kw))
        assert lo <= hi + 1e-12


class TestReferenceTable:
    def test_expected_rows_present(self):
        assert REFERENCE_RMSE[("case1", "dmae", "f")] == pytest.approx((0.0060, 0.0047))
        assert REFERENCE_RMSE[("case1", "pf", "f")] == pytest.approx((0.1549, 0.1496))
        assert REFERENCE_RMSE[("case2", "dmae", "d")] == pytest.approx((0.0709, 0.1459))
        assert REFERENCE_RMSE[("case3", "dmae", "f")] == pytest.approx((0.0230, 0.0283))


class TestSensitivitySweep:
    def test_axis_validated(self, tiny_cfg):
        with pytest.raises(ValueError, match="axis"):
            sensitivity_sweep(tiny_cfg, "S", grid=[1.0], seeds=[0])

    def test_grid_positive(self, tiny_cfg):
        with pytest.raises(ValueError, match="grid"):
            sensitivity_sweep(tiny_cfg, "Q", grid=[0.0, 1.0], seeds=[0])

    def test_identity_cell_matches_direct_run(self, tiny_cfg):
        res = sensitivity_sweep(tiny_cfg, "Q", grid=[1.0], seeds=[0, 1], burn_in=2)
        assert len(res.cells) == 2
        for cell in res.cells:
            log = run_dmae(tiny_cfg, seed=cell.seed)
            np.testing.assert_array_equal(cell.rmse, analysis.rmse(log.fbar, log.f, burn_in=2))
            assert cell.error is None

    def test_failures_recorded_not_raised(self, tiny_cfg, monkeypatch):
        real = analysis.run_dmae

        def flaky(base, seed=None, filter_scale_q=1.0, filter_scale_r=1.0):
            if filter_scale_q > 1.0:
                raise RuntimeError("boom")
            return real(base, seed=seed, filter_scale_q=filter_scale_q, filter_scale_r=filter_scale_r)

        monkeypatch.setattr(analysis, "run_dmae", flaky)
        res = sensitivity_sweep(tiny_cfg, "Q", grid=[1.0, 10.0], seeds=[0], burn_in=2)
        by_coeff = {c.coefficient: c for c in res.cells}
        assert by_coeff[1.0].error is None
        assert "boom" in by_coeff[10.0].error
        assert by_coeff[10.0].rmse is None
        rows = {r[0]: r for r in res.summary()}
        assert rows[10.0][3] == 1  # failure count
        assert np.isnan(rows[10.0][2])

    def test_mismatch_grid_degrades_error(self, tiny_cfg):
        """Strong filter-side R mismatch should not beat the nominal filter."""
        res = sensitivity_sweep(tiny_cfg, "R", grid=[1.0, 1e3], seeds=[0, 1, 2], burn_in=2)
        rows = {r[0]: r[2] for r in res.summary()}
        assert rows[1.0] < rows[1e3]


class TestWriters:
    def test_sweep_csvs(self, tiny_cfg, tmp_path):
        res = sensitivity_sweep(tiny_cfg, "Q", grid=[1.0, 2.0], seeds=[0, 1], burn_in=2)
        summary = tmp_path / "sweep.csv"
        detail = tmp_path / "sweep_detail.csv"
        write_sweep_csv(summary, res, digest="abc")
        write_sweep_detail_csv(detail, res, digest="abc")

        lines = summary.read_text().splitlines()
        assert lines[0].startswith("# sweep v1 axis=Q digest=abc")
        rows = list(csv.reader(lines[1:]))
        assert rows[0] == ["coefficient", "rmse_f1", "rmse_f2", "rmse_mean", "failures"]
        assert len(rows) == 3

        dlines = detail.read_text().splitlines()
        assert dlines[0].startswith("# sweep-detail v1")
        drows = list(csv.reader(dlines[1:]))
        assert len(drows) == 5  # header + one row per (coefficient, seed)

    def test_results_table(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results_table(
            path,
            [
                ("case1", "dmae", "f", [0.01, 0.02], [0.006, 0.0047]),
                ("case1", "pf", "f", [0.15, 0.14], None),
            ],
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "# results v1"
        rows = list(csv.reader(lines[1:]))
        assert rows[0] == ["case", "method", "quantity", "channel", "rmse", "reference"]
        assert len(rows) == 5
        assert rows[1][:4] == ["case1", "dmae", "f", "1"]
        assert rows[3][5] == ""  # no reference for the second entry

    def test_summarize_run_keys(self, tiny_cfg):
        log = run_dmae(tiny_cfg, seed=0)
        out = summarize_run(tiny_cfg, log, burn_in=2)
        assert out["estimator"] == "dmae"
        assert set(out["rmse"]) == {"x", "d", "f"}
        assert len(out["rmse"]["f"]) == 2
        assert "steady_state_rmse_f" in out
        assert out["switch"]["onsets"][0][0] == 6
