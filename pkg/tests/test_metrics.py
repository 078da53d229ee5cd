"""Trajectory comparison and tracking-quality metrics.

Oracle strategy: every metric is exercised on small hand-built series
whose windowed means, RMS values, and settling instants follow from
arithmetic done in the test itself.
"""

import numpy as np
import pytest

from mhtes import PlantConfig, Trajectory
from mhtes.metrics import (
    conservation_drift,
    hold_segments,
    nrmse_table,
    pooled_ranges,
    settling_report,
    step_response_shift,
    type_normalizers,
    window_indices,
    windowed_rmse,
)
from mhtes.plant import hydrogen_inventory

from test_plant import X_REF as X_REF_STATE


X_REF = np.asarray(X_REF_STATE.as_array(), dtype=float)


# ---------------------------------------------------------------------------
# normalizers
# ---------------------------------------------------------------------------

def test_pooled_ranges_spans_all_arrays():
    a = np.zeros((3, 6))
    a[1] = [1.0, -2.0, 10.0, 0.0, 0.1, 0.0]
    b = np.zeros((2, 6))
    b[1] = [-4.0, 3.0, 0.0, -20.0, 0.0, 0.05]
    r = pooled_ranges([a, b])
    np.testing.assert_allclose(r, [5.0, 5.0, 10.0, 20.0, 0.1, 0.05])


def test_type_normalizers_share_the_group_peak():
    r = type_normalizers(np.array([1.0, 3.0, 10.0, 40.0, 0.1, 0.2]))
    np.testing.assert_allclose(r, [3.0, 3.0, 40.0, 40.0, 0.2, 0.2])
    # one state of a group flat is fine as long as its partner moved
    r = type_normalizers(np.array([0.0, 3.0, 10.0, 40.0, 0.1, 0.2]))
    np.testing.assert_allclose(r[:2], [3.0, 3.0])


def test_type_normalizers_reject_frozen_group():
    with pytest.raises(ValueError, match="never moved"):
        type_normalizers(np.array([1.0, 3.0, 0.0, 0.0, 0.1, 0.2]))


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------

def test_window_indices_endpoint_absorbed():
    t = np.arange(0.0, 11.0)  # span 10, window 3 -> 4 windows
    idx, n = window_indices(t, 3.0)
    assert n == 4
    np.testing.assert_array_equal(idx, [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3])


def test_window_indices_exact_division():
    t = np.arange(0.0, 10.0)  # span 9, window 3 -> exactly 3 windows
    idx, n = window_indices(t, 3.0)
    assert n == 3
    # t = 9 falls on the boundary and joins the last window
    np.testing.assert_array_equal(idx, [0, 0, 0, 1, 1, 1, 2, 2, 2, 2])


def test_windowed_rmse_constant_offset():
    t = np.arange(0.0, 11.0)
    ref = np.zeros((11, 2))
    test = np.column_stack([np.full(11, 0.5), np.full(11, -2.0)])
    out = windowed_rmse(t, ref, test, 3.0)
    assert out.shape == (4, 2)
    np.testing.assert_allclose(out[:, 0], 0.5, rtol=1e-15)
    np.testing.assert_allclose(out[:, 1], 2.0, rtol=1e-15)


def test_windowed_rmse_mixed_window_is_root_mean_square():
    t = np.array([0.0, 1.0, 2.0])
    ref = np.zeros((3, 1))
    test = np.array([[3.0], [4.0], [0.0]])
    out = windowed_rmse(t, ref, test, 10.0)  # single window
    np.testing.assert_allclose(out, [[np.sqrt((9.0 + 16.0) / 3.0)]])


def test_windowed_rmse_shape_mismatch():
    t = np.arange(3.0)
    with pytest.raises(ValueError, match="shape mismatch"):
        windowed_rmse(t, np.zeros((3, 2)), np.zeros((3, 3)), 1.0)


def test_windowed_rmse_empty_window():
    t = np.array([0.0, 0.1, 10.0])
    with pytest.raises(ValueError, match="holds no samples"):
        windowed_rmse(t, np.zeros((3, 1)), np.ones((3, 1)), 3.0)


def test_nrmse_table_divides_by_normalizer():
    t = np.arange(0.0, 7.0)
    ref = np.zeros((7, 6))
    test = ref + np.array([1.0, 2.0, 30.0, 40.0, 0.01, 0.02])
    table = nrmse_table(t, ref, test, 3.0, np.array([2.0, 2.0, 100.0, 100.0,
                                                     0.1, 0.1]))
    assert table.shape == (2, 6)
    np.testing.assert_allclose(table[0], [0.5, 1.0, 0.3, 0.4, 0.1, 0.2],
                               rtol=1e-15)
    np.testing.assert_allclose(table[1], table[0], rtol=1e-15)


# ---------------------------------------------------------------------------
# conservation
# ---------------------------------------------------------------------------

def _mini_traj(states):
    n = states.shape[0]
    return Trajectory(t=np.arange(float(n)), states=states,
                      inputs=np.zeros((n, 3)), disturbances=np.zeros((n, 2)),
                      heat_rates=np.zeros((n, 2)), rates=np.zeros((n, 2)))


def test_conservation_drift_zero_for_constant_state(params):
    cfg = PlantConfig(params, "b_to_a")
    states = np.tile(X_REF, (4, 1))
    assert conservation_drift(_mini_traj(states), cfg) == 0.0


def test_conservation_drift_reports_worst_relative_excursion(params):
    cfg = PlantConfig(params, "b_to_a")
    s0 = X_REF.copy()
    s1 = X_REF.copy()
    s1[2] *= 1.5  # more gas in reactor A
    s2 = X_REF.copy()
    s2[4] *= 0.5  # less absorbed mass in reactor A
    states = np.vstack([s0, s1, s2, s0])
    invs = [hydrogen_inventory(s, cfg) for s in (s0, s1, s2)]
    expected = max(abs(v - invs[0]) for v in invs) / abs(invs[0])
    assert conservation_drift(_mini_traj(states), cfg) == pytest.approx(
        expected, rel=1e-12)
    assert expected > 0.0


# ---------------------------------------------------------------------------
# step shift
# ---------------------------------------------------------------------------

def test_step_response_shift_on_clean_step():
    t = np.arange(0.0, 201.0)
    s = np.where(t < 100.0, 2.0, 7.0)
    assert step_response_shift(t, s, 99.5) == pytest.approx(5.0, abs=1e-12)


def test_step_response_shift_on_pure_ramp():
    # windows centered 60 apart on a linear ramp measure slope * 60
    t = np.arange(0.0, 201.0)
    s = 0.1 * t
    assert step_response_shift(t, s, 99.5) == pytest.approx(6.0, abs=1e-12)


def test_step_response_shift_needs_samples():
    t = np.arange(0.0, 201.0)
    with pytest.raises(ValueError, match="no samples"):
        step_response_shift(t, np.zeros_like(t), 500.0)


# ---------------------------------------------------------------------------
# settling
# ---------------------------------------------------------------------------

def test_hold_segments_split_on_any_row_change():
    r = np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 1.0], [2.0, 1.0], [2.0, 1.0],
                  [2.0, 3.0]])
    assert hold_segments(np.arange(6.0), r) == [(0, 2), (2, 5), (5, 6)]
    assert hold_segments(np.arange(4.0), np.ones((4, 2))) == [(0, 4)]


def test_settling_report_hand_case():
    t = np.arange(0.0, 100.0)
    r = np.where(t < 50.0, 100.0, 200.0)[:, None]
    y = np.empty((100, 1))
    y[:10, 0] = 103.0      # outside the 1 W band
    y[10:50, 0] = 100.3    # inside from k = 10 onward
    y[50:, 0] = 300.0      # never settles against 200
    reports = settling_report(t, y, r, tol_frac=0.01)
    assert len(reports) == 2 and len(reports[0]) == 1
    seg1 = reports[0][0]
    assert seg1.reference == 100.0
    assert seg1.band == pytest.approx(1.0)
    assert seg1.settle_time == pytest.approx(10.0)
    assert seg1.tail_max_error == pytest.approx(0.3)
    assert seg1.t_start == 0.0 and seg1.t_end == 49.0
    seg2 = reports[1][0]
    assert seg2.settle_time is None
    assert seg2.tail_max_error == pytest.approx(100.0)
    assert seg2.band == pytest.approx(2.0)


def test_settling_report_zero_reference_falls_back_to_unit_band():
    t = np.arange(0.0, 20.0)
    r = np.zeros((20, 1))
    y = np.full((20, 1), 0.004)
    seg = settling_report(t, y, r, tol_frac=0.01)[0][0]
    assert seg.band == pytest.approx(0.01)
    assert seg.settle_time == 0.0


def test_settling_report_two_outputs_reported_independently():
    t = np.arange(0.0, 40.0)
    r = np.tile([50.0, -80.0], (40, 1))
    y = np.tile([50.2, -90.0], (40, 1))
    seg = settling_report(t, y, r, tol_frac=0.01)[0]
    assert len(seg) == 2
    assert seg[0].settle_time == 0.0        # 0.2 inside the 0.5 band
    assert seg[1].settle_time is None       # 10 outside the 0.8 band
