"""Trajectory comparison and tracking-quality metrics.

Model-fit quality is reported as normalized RMSE per state and per time
window: the normalizer for each state is the pooled excursion range of its
physical type (temperature, pressure, weight fraction) across every
reference trajectory supplied, so states of one type share a scale and
near-constant states do not blow the ratio up. Window w covers samples
with floor((t - t0)/window) == w, the final window absorbing the endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import PlantConfig, Trajectory, hydrogen_inventory

__all__ = [
    "pooled_ranges",
    "type_normalizers",
    "window_indices",
    "windowed_rmse",
    "nrmse_table",
    "conservation_drift",
    "hold_segments",
    "SettlingReport",
    "settling_report",
    "step_response_shift",
]

# State columns grouped by physical type: temperatures, pressures, fractions.
_TYPE_GROUPS = ((0, 1), (2, 3), (4, 5))


def pooled_ranges(state_arrays) -> np.ndarray:
    """Per-column max-minus-min pooled over a list of (n, 6) arrays."""
    mins = np.full(6, math.inf)
    maxs = np.full(6, -math.inf)
    for arr in state_arrays:
        a = np.asarray(arr)
        mins = np.minimum(mins, a.min(axis=0))
        maxs = np.maximum(maxs, a.max(axis=0))
    return maxs - mins


def type_normalizers(ranges: np.ndarray) -> np.ndarray:
    """Share the largest excursion of each physical type across its states."""
    out = np.empty(6)
    for group in _TYPE_GROUPS:
        peak = max(float(ranges[i]) for i in group)
        if peak <= 0.0:
            raise ValueError(
                f"state group {group} never moved; NRMSE normalizer undefined")
        for i in group:
            out[i] = peak
    return out


def window_indices(t: np.ndarray, window_s: float) -> tuple[np.ndarray, int]:
    """Window id per sample and the window count; the last window takes the
    endpoint sample(s)."""
    t = np.asarray(t, dtype=float)
    span = float(t[-1] - t[0])
    n_windows = max(1, int(math.ceil(span / window_s - 1e-9)))
    idx = np.floor((t - t[0]) / window_s + 1e-9).astype(int)
    return np.minimum(idx, n_windows - 1), n_windows


def windowed_rmse(t: np.ndarray, ref: np.ndarray, test: np.ndarray,
                  window_s: float) -> np.ndarray:
    """RMSE of (test - ref) per window per column, shape (n_windows, k)."""
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    test = np.atleast_2d(np.asarray(test, dtype=float))
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {test.shape}")
    idx, n_windows = window_indices(t, window_s)
    err2 = (test - ref) ** 2
    out = np.empty((n_windows, ref.shape[1]))
    for w in range(n_windows):
        mask = idx == w
        if not np.any(mask):
            raise ValueError(f"window {w} holds no samples")
        out[w] = np.sqrt(err2[mask].mean(axis=0))
    return out


def nrmse_table(t: np.ndarray, ref_states: np.ndarray, test_states: np.ndarray,
                window_s: float, normalizers: np.ndarray) -> np.ndarray:
    """Windowed NRMSE, shape (n_windows, 6): windowed RMSE over normalizer."""
    rmse = windowed_rmse(t, ref_states, test_states, window_s)
    return rmse / np.asarray(normalizers, dtype=float)[None, :]


def conservation_drift(traj: Trajectory, cfg: PlantConfig) -> float:
    """Largest relative drift of the total hydrogen inventory over a run."""
    inv0 = hydrogen_inventory(traj.states[0], cfg)
    worst = 0.0
    for i in range(traj.t.size):
        inv = hydrogen_inventory(traj.states[i], cfg)
        worst = max(worst, abs(inv - inv0))
    return worst / abs(inv0)


def step_response_shift(t: np.ndarray, series: np.ndarray, t_step: float,
                        pre: tuple[float, float] = (-30.0, 0.0),
                        post: tuple[float, float] = (30.0, 60.0)) -> float:
    """Quasi-steady shift of a series across a step at ``t_step``.

    Difference of the series' means over two short windows relative to the
    step time; the windows are tight enough that slow drift from the
    continuing charge or discharge stays out of the measurement.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(series, dtype=float)
    pre_mask = (t >= t_step + pre[0]) & (t <= t_step + pre[1])
    post_mask = (t >= t_step + post[0]) & (t <= t_step + post[1])
    if not pre_mask.any() or not post_mask.any():
        raise ValueError(f"no samples in the windows around t = {t_step}")
    return float(s[post_mask].mean() - s[pre_mask].mean())


def hold_segments(t: np.ndarray, r: np.ndarray) -> list[tuple[int, int]]:
    """Maximal index ranges [i0, i1) over which every reference row is constant."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    bounds = [0]
    for i in range(1, r.shape[0]):
        if not np.array_equal(r[i], r[i - 1]):
            bounds.append(i)
    bounds.append(r.shape[0])
    return [(a, b) for a, b in zip(bounds, bounds[1:])]


@dataclass
class SettlingReport:
    """Per hold segment and output: when tracking entered its final band."""

    t_start: float
    t_end: float
    reference: float
    settle_time: float | None
    tail_max_error: float
    band: float


def settling_report(t: np.ndarray, y: np.ndarray, r: np.ndarray,
                    tol_frac: float = 0.01) -> list[list[SettlingReport]]:
    """Settling analysis per reference hold segment, outer list over segments.

    The band is ``tol_frac`` of the segment's |reference| (falling back to
    the largest |reference| seen when a segment's reference is zero).
    ``settle_time`` is the first instant from which the output stays inside
    the band until the segment ends, measured from the segment start; None
    when it never settles. ``tail_max_error`` is the worst error over the
    segment's final tenth.
    """
    t = np.asarray(t, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    fallback = float(np.max(np.abs(r))) or 1.0
    reports = []
    for i0, i1 in hold_segments(t, r):
        seg = []
        for j in range(y.shape[1]):
            ref = float(r[i0, j])
            band = tol_frac * (abs(ref) if ref != 0.0 else fallback)
            err = np.abs(y[i0:i1, j] - ref)
            inside = err <= band
            settle = None
            for k in range(inside.size):
                if inside[k:].all():
                    settle = float(t[i0 + k] - t[i0])
                    break
            tail = max(1, (i1 - i0) // 10)
            seg.append(SettlingReport(
                t_start=float(t[i0]), t_end=float(t[i1 - 1]), reference=ref,
                settle_time=settle, tail_max_error=float(err[-tail:].max()),
                band=band))
        reports.append(seg)
    return reports
