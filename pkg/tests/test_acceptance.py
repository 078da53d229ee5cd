"""Acceptance gate: one test per shipped acceptance criterion.

Each test names its criterion, states the bound in its docstring, and fails
with the measured quantity when the bound is missed. A module fixture runs
every packaged scenario once and shares the results across the criteria, so
the gate doubles as a wall-clock budget check on the shipped catalog.
"""

import time
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import math

import numpy as np
import pytest

from mhtes import (
    ControllerConfig,
    MPCController,
    PiecewiseConstant,
    PlantConfig,
    conservation_drift,
    core,
    discretize,
    equilibrium_pressure,
    hydrogen_inventory,
    integrate,
    linearize,
    packaged_scenario,
    packaged_scenario_names,
    run_closed_loop,
    run_relin_study,
    run_validation,
    state_derivative,
    to_grouped,
)
from mhtes.cli import main
from mhtes.linearize import (
    DIST_STEP_FLOORS,
    INPUT_STEP_FLOORS,
    STATE_STEP_FLOORS,
)

from test_cli import POINT_TOML, _tree_bytes
from test_linearize import _richardson_jacobian, _series_expm
from test_mpc import _dp_first_move
from test_qp import _box, _projected_gradient_box, _solve
from test_scenarios import BASE_OPEN_LOOP, _equilibrium_closed_loop_text, _write

_CLOSED_LOOP = ("disturb_case1", "disturb_case2", "track_case1", "track_case2",
                "track_ratio1")


@dataclass
class _Run:
    scenario: object
    result: object
    wall: float
    nonlinear: object


@pytest.fixture(scope="module")
def suite(params):
    """Run every packaged scenario through its shipped pipeline, timed."""
    runs = {}
    sc1 = packaged_scenario("case1")
    sc2 = packaged_scenario("case2")
    for name, own, companion in (("case1", sc1, sc2), ("case2", sc2, sc1)):
        t0 = time.perf_counter()
        res = run_validation(own, companion, params)
        runs[name] = _Run(own, res, time.perf_counter() - t0, res.nonlinear)
    sc = packaged_scenario("relin")
    t0 = time.perf_counter()
    res = run_relin_study(sc, params)
    runs["relin"] = _Run(sc, res, time.perf_counter() - t0, res.nonlinear)
    for name in _CLOSED_LOOP:
        sc = packaged_scenario(name)
        t0 = time.perf_counter()
        res = run_closed_loop(sc, params)
        runs[name] = _Run(sc, res, time.perf_counter() - t0, res.trajectory)
    return runs


def test_criterion_01_hydrogen_conservation_and_runtime(suite, params):
    """Every shipped scenario conserves total hydrogen to better than 1e-6
    relative drift, and each scenario's pipeline finishes in under a minute."""
    assert sorted(suite) == packaged_scenario_names()
    for name, run in suite.items():
        cfg = PlantConfig(params, run.scenario.mode)
        drift = conservation_drift(run.nonlinear, cfg)
        assert drift < 1e-6, (name, drift)
        assert run.wall < 60.0, (name, run.wall)


def test_criterion_02_dead_zone_equilibrium_holds(params, cfg1):
    """A state resting inside both hysteresis dead zones, with matched inlet
    temperatures and a compressor setting that zeroes the line's driving
    difference, stays put for 600 s with relative state drift below 1e-9."""
    T_A, T_B, w_A, w_B = 281.0, 309.0, 0.006, 0.006
    pa_lo = equilibrium_pressure(w_A, T_A, params.material_A, "des")
    pa_hi = equilibrium_pressure(w_A, T_A, params.material_A, "abs")
    pb_lo = equilibrium_pressure(w_B, T_B, params.material_B, "des")
    pb_hi = equilibrium_pressure(w_B, T_B, params.material_B, "abs")
    P_A = 0.5 * (pa_lo + pa_hi)
    P_B = 0.5 * (pb_lo + pb_hi)
    assert pa_lo < P_A < pa_hi and pb_lo < P_B < pb_hi
    x_eq = np.array([T_A, T_B, P_A, P_B, w_A, w_B])
    u_eq = PiecewiseConstant((0.0,), ((0.2, 0.2, P_A - P_B),))
    d_eq = PiecewiseConstant((0.0,), ((T_A, T_B),))
    hold = integrate(x_eq, u_eq, d_eq, (0.0, 600.0), cfg1, sample_dt=60.0)
    rel = np.abs(hold.states - x_eq) / np.maximum(np.abs(x_eq), 1.0)
    assert rel.max() < 1e-9, rel.max()


def test_criterion_03_compressor_step_response(suite, cfg1):
    """After the first charge scenario's compressor step the line's driving
    difference decays by at least 90% within one second, and the quasi-steady
    shift of the charging bed's pressure lands within 15% of the step size."""
    run = suite["case1"]
    sc = run.scenario
    traj = run.nonlinear
    t_step = 300.0
    dP = sc.u_sched(t_step + 1e-9)[2] - sc.u_sched(t_step - 1e-9)[2]
    assert dP != 0.0
    i_pre = int(np.searchsorted(traj.t, t_step)) - 1
    assert traj.t[i_pre] == t_step - 1.0
    # Sub-second resolution needs a fine rerun; the stored grid is 1 s.
    fine = integrate(traj.states[i_pre], sc.u_sched, sc.d_sched,
                     (t_step - 1.0, t_step + 2.0), cfg1, sample_dt=0.05)
    dP_at = np.array([sc.u_sched(t + 1e-9)[2] for t in fine.t])
    drive = fine.states[:, 3] + dP_at - fine.states[:, 2]
    j0 = int(np.searchsorted(fine.t, t_step))
    j1 = int(np.searchsorted(fine.t, t_step + 1.0))
    decay = 1.0 - abs(drive[j1]) / abs(drive[j0])
    assert decay >= 0.90, (decay, drive[j0], drive[j1])
    pre = traj.states[(traj.t >= t_step - 30) & (traj.t <= t_step), 2].mean()
    post = traj.states[(traj.t >= t_step + 30) & (traj.t <= t_step + 60), 2].mean()
    shift = (post - pre) / dP
    assert 0.85 <= shift <= 1.15, shift


def test_criterion_04_windowed_nrmse_and_reports(suite, tmp_path):
    """Both validation cases keep every state's NRMSE at or below 12.5% in
    every five-minute window, and the validate subcommand emits the report
    tables with one record per window and variable."""
    for name in ("case1", "case2"):
        table = suite[name].result.nrmse
        assert table.shape[1] == 6
        assert table.max() <= 0.125, (name, table.max())
    out = tmp_path / "report"
    assert main(["--out", str(out), "validate", "--case", "1"]) == 0
    doc = tomllib.loads((out / "case1_metrics.toml").read_text())
    records = doc["record"]
    table = suite["case1"].result.nrmse
    assert len(records) == table.size
    assert set(records[0]) == {"window_start_s", "window_end_s", "variable",
                              "rmse", "nrmse"}
    assert max(rec["nrmse"] for rec in records) == table.max()
    text = (out / "case1_metrics.txt").read_text()
    assert "worst NRMSE:" in text
    assert (out / "case1_nonlinear.csv").is_file()
    assert (out / "case1_linear.csv").is_file()


def test_criterion_05_relinearization_study_error_ordering(suite):
    """Over the two-hour study the never-refreshed variant's windowed heat
    rate RMSE on the discharging bed never decreases across the four windows,
    and its final window exceeds twice each refreshed variant's final."""
    res = suite["relin"].result
    periods = sorted(res.heat_rmse)
    assert periods[0] == 0.0 and len(periods) == 3
    never = res.heat_rmse[0.0][:, 1]
    assert never.shape == (4,)
    assert np.all(np.diff(never) >= 0.0), never
    for period in periods[1:]:
        final = res.heat_rmse[period][-1, 1]
        assert never[-1] > 2.0 * final, (period, never[-1], final)


# ---------------------------------------------------------------------------
# criterion 6: grouped realization against the tabulated reference
# ---------------------------------------------------------------------------
# Grouped variable order: T_A, P_A, w_A, T_B, P_B, w_B for states,
# mdot_wg_A, mdot_wg_B, dP_comp, T_wg_in_A, T_wg_in_B for inputs and
# disturbances together, Q_A, Q_B for the heat outputs.

REF_A = np.array([
    [-8.17e-3, -3.35e-8, -8.13,    -9.07e-5, 4.09e-7,  0.0],
    [8840.0,   -4.38,     1.11e7,   0.0,     3.96,     0.0],
    [-2.28e-7, 1.38e-11, -2.93e-4,  0.0,     0.0,      0.0],
    [0.0,      0.0,       0.0,     -0.216,   1.83e-5, -94.4],
    [0.0,      4.93,      0.0,      2.03e5, -22.4,     9.00e7],
    [0.0,      0.0,       0.0,     -4.78e-6, 4.09e-10, -2.12e-3],
])
REF_B = np.array([
    [-0.039, 0.0,   4.47e-7, 1.68e-3, 0.0],
    [0.0,    0.0,   3.91,    0.0,     0.0],
    [0.0,    0.0,   0.0,     0.0,     0.0],
    [0.0,    0.064, 0.0,     0.0,     2.99e-3],
    [0.0,    0.0,  -5.00,    0.0,     0.0],
    [0.0,    0.0,   0.0,     0.0,     0.0],
])
REF_C = np.array([[367.1, 0.0, 0.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 436.3, 0.0, 0.0]])
REF_D = np.array([[7930.0, 0.0, 0.0, -341.0, 0.0],
                  [0.0, -9600.0, 0.0, 0.0, -452.0]])

# Nominal spans used to make entries comparable across units.
SCALE_X = np.array([10.0, 2e5, 4e-3, 10.0, 2e5, 4e-3])
SCALE_U = np.array([0.1, 0.1, 1e5, 5.0, 5.0])
SCALE_Q = np.array([2000.0, 2000.0])


def _pattern_violations(name, M, M_ref, srow, scol):
    """Zero-pattern and sign-pattern mismatches between M and the reference.

    An entry counts as a structural zero when its row- and column-scaled
    magnitude stays below 1% of the largest scaled entry in its row."""
    scaled = M * scol / srow[:, None]
    problems = []
    for i in range(M.shape[0]):
        row_max = np.abs(scaled[i]).max()
        for j in range(M.shape[1]):
            if M_ref[i, j] == 0.0:
                if abs(scaled[i, j]) > 0.01 * row_max:
                    problems.append(
                        f"{name}({i + 1},{j + 1}): expected structural zero, "
                        f"scaled magnitude is {abs(scaled[i, j]) / row_max:.1%}"
                        f" of the row maximum")
            elif math.copysign(1.0, M[i, j]) != math.copysign(1.0, M_ref[i, j]):
                problems.append(
                    f"{name}({i + 1},{j + 1}): computed {M[i, j]:+.3e} has the "
                    f"opposite sign of the reference entry {M_ref[i, j]:+.3e}")
    return problems


def test_criterion_06_realization_matches_reference_pattern(case1, cfg1, lm1):
    """At the first charge operating point the grouped state-space matrices
    match the tabulated reference realization: zeros where it has zeros,
    matching signs elsewhere, and the six heat-map gains within 25%."""
    A_g = to_grouped(lm1.A)
    B_g = to_grouped(np.hstack([lm1.B, lm1.B_d]))
    C_g = to_grouped(lm1.C)
    D_g = np.hstack([lm1.D, lm1.D_d])

    problems = []
    problems += _pattern_violations("A", A_g, REF_A, SCALE_X, SCALE_X)
    problems += _pattern_violations("B", B_g, REF_B, SCALE_X, SCALE_U)
    problems += _pattern_violations("C", C_g, REF_C, SCALE_Q, SCALE_X)
    problems += _pattern_violations("D", D_g, REF_D, SCALE_Q, SCALE_U)
    for label, mine, ref in (
            ("C(1,1)", C_g[0, 0], REF_C[0, 0]),
            ("C(2,4)", C_g[1, 3], REF_C[1, 3]),
            ("D(1,1)", D_g[0, 0], REF_D[0, 0]),
            ("D(2,2)", D_g[1, 1], REF_D[1, 1]),
            ("D(1,4)", D_g[0, 3], REF_D[0, 3]),
            ("D(2,5)", D_g[1, 4], REF_D[1, 4])):
        rel = abs(mine - ref) / abs(ref)
        if rel > 0.25:
            problems.append(f"{label}: gain {mine:.1f} is {rel:.1%} from the "
                            f"reference {ref:.1f}, bound 25%")
    assert not problems, "realization mismatches:\n" + "\n".join(problems)


def test_criterion_07_kernels_match_independent_oracles(params, case1, cfg1,
                                                        lm1):
    """Jacobians agree with Richardson extrapolation to 1e-6 relative, the
    exact discretization agrees with a high-precision series exponential to
    1e-12, the active-set solver agrees with projected gradient to 1e-6 on
    50 random boxes, and the unconstrained first move matches an affine
    Riccati recursion to 1e-6."""
    x0, u0, d0 = case1.x0, case1.u0, case1.d0

    def g(x, u, d):
        Q_A, _ = core.heat_rate(x[0], d[0], u[0], params.geometry_A,
                                params.fluid)
        Q_B, _ = core.heat_rate(x[1], d[1], u[1], params.geometry_B,
                                params.fluid)
        return np.array([Q_A, Q_B])

    pairs = [
        (lm1.A, _richardson_jacobian(
            lambda x: state_derivative(x, u0, d0, cfg1), x0,
            STATE_STEP_FLOORS, 6)),
        (lm1.B, _richardson_jacobian(
            lambda u: state_derivative(x0, u, d0, cfg1), u0,
            INPUT_STEP_FLOORS, 6)),
        (lm1.B_d, _richardson_jacobian(
            lambda d: state_derivative(x0, u0, d, cfg1), d0,
            DIST_STEP_FLOORS, 6)),
        (lm1.C, _richardson_jacobian(lambda x: g(x, u0, d0), x0,
                                     STATE_STEP_FLOORS, 2)),
        (lm1.D, _richardson_jacobian(lambda u: g(x0, u, d0), u0,
                                     INPUT_STEP_FLOORS, 2)),
        (lm1.D_d, _richardson_jacobian(lambda d: g(x0, u0, d), d0,
                                       DIST_STEP_FLOORS, 2)),
    ]
    for got, oracle in pairs:
        scale = np.abs(oracle).max(axis=1, keepdims=True)
        significant = np.abs(oracle) > 1e-9 * scale
        rel = (np.abs(got[significant] - oracle[significant])
               / np.abs(oracle[significant]))
        assert rel.max() <= 1e-6, rel.max()

    dm = discretize(lm1, 1.0)
    M = np.zeros((12, 12))
    M[:6, :6] = lm1.A
    M[:6, 6:9] = lm1.B
    M[:6, 9:11] = lm1.B_d
    M[:6, 11] = lm1.f0
    E = _series_expm(M, 1.0)
    scale = np.abs(E).max()
    np.testing.assert_allclose(dm.A_d, E[:6, :6], atol=1e-12 * scale)
    np.testing.assert_allclose(dm.B_du, E[:6, 6:9], atol=1e-12 * scale)
    np.testing.assert_allclose(dm.B_dd, E[:6, 9:11], atol=1e-12 * scale)
    np.testing.assert_allclose(dm.drift, E[:6, 11], atol=1e-12 * scale)

    rng = np.random.default_rng(777)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        W = rng.normal(size=(n, n))
        H = W.T @ W + np.eye(n)
        q = rng.normal(size=n) * 3.0
        G, h = _box(n)
        res = _solve(H, q, G, h, np.zeros(n))
        np.testing.assert_allclose(res.z, _projected_gradient_box(H, q),
                                   atol=1e-6)

    cfg = ControllerConfig(u_min=(-1e9, -1e9, -1e9), u_max=(1e9, 1e9, 1e9),
                           du_max=(1e9, 1e9, 1e9))
    probe = MPCController(params, case1.mode, cfg, x0, u0, d0,
                          reference0=np.zeros(2))
    r_ref = probe.model.g0 + np.array([500.0, -300.0])
    ctl = MPCController(params, case1.mode, cfg, x0, u0, d0, reference0=r_ref)
    qp = ctl._qp
    y0 = ctl._measured_output(np.asarray(x0), ctl.u_prev, ctl.d_prev)
    xt0 = np.concatenate([np.zeros(6), cfg.T_s * (y0 - r_ref)])
    w = qp.Bdt @ np.concatenate([np.zeros(2), r_ref]) + qp.ht
    Q = np.diag(np.concatenate([np.zeros(6), np.asarray(cfg.q_integrator)]))
    R = np.diag(np.asarray(cfg.r_move))
    v0 = _dp_first_move(qp.At, qp.Bt, Q, R, xt0, w, cfg.horizon)
    res = ctl.step(0.0, x0, r_ref, d0)
    np.testing.assert_allclose(res.u - ctl.discrete.u0, v0, rtol=1e-6,
                               atol=1e-9)


def test_criterion_08_tracking_disturbance_rejection_and_bounds(suite):
    """Closed-loop scenarios settle to under 1% tracking error within five
    minutes of every setpoint change, recover within ten seconds of every
    disturbance step, and never violate the input bounds; in the equal-split
    scenario the compressor pressure difference rises once the charging
    bed's working-fluid flow saturates."""
    for name in _CLOSED_LOOP:
        run = suite[name]
        cfg = run.scenario.controller
        traj = run.result.trajectory
        log = run.result.control
        lo = np.asarray(cfg.u_min)
        hi = np.asarray(cfg.u_max)
        assert np.all(traj.inputs >= lo), name
        assert np.all(traj.inputs <= hi), name

        t = traj.t
        refs = log.references
        last_setpoint = np.empty(t.size)
        mark = t[0]
        for k in range(t.size):
            if k and not np.array_equal(refs[k], refs[k - 1]):
                mark = t[k]
            last_setpoint[k] = mark
        last_disturbance = np.full(t.size, -np.inf)
        mark = -np.inf
        for k in range(t.size):
            if k and not np.array_equal(traj.disturbances[k],
                                        traj.disturbances[k - 1]):
                mark = t[k]
            last_disturbance[k] = mark

        settled = ((t - last_setpoint >= 300.0)
                   & (t - last_disturbance >= 10.0))
        assert settled.any(), name
        assert np.all(np.abs(refs[settled]) > 0.0), name
        err = np.abs(traj.heat_rates - refs)
        band = 0.01 * np.abs(refs)
        bad = settled[:, None] & (err >= band)
        assert not bad.any(), (name, float(err[settled].max()),
                              float(band[settled].min()))

    run = suite["track_ratio1"]
    us = run.result.trajectory.inputs
    flow_cap = run.scenario.controller.u_max[0]
    saturated = us[:, 0] >= flow_cap
    assert saturated.any()
    assert float(us[:, 0].max()) == flow_cap
    k0 = int(np.argmax(saturated))
    assert us[-1, 2] > us[k0, 2]
    assert float(us[k0:, 2].max()) > float(us[k0, 2])


def _rerun_identical(tail, tmp_path, tag):
    out1 = tmp_path / f"{tag}_first"
    out2 = tmp_path / f"{tag}_second"
    assert main(["--out", str(out1)] + tail) == 0
    assert main(["--out", str(out2)] + tail) == 0
    tree1 = _tree_bytes(out1)
    tree2 = _tree_bytes(out2)
    assert list(tree1) == list(tree2), tag
    for fname in tree1:
        assert tree1[fname] == tree2[fname], (tag, fname)


def test_criterion_09_repeated_runs_are_byte_identical(tmp_path, params):
    """Running each file-writing subcommand twice produces byte-identical
    CSV and metrics outputs."""
    mini = _write(tmp_path, BASE_OPEN_LOOP, name="mini.toml")
    point = tmp_path / "point.toml"
    point.write_text(POINT_TOML, encoding="utf-8")
    hold = _write(tmp_path, _equilibrium_closed_loop_text(params),
                  name="hold.toml")
    study_text = (BASE_OPEN_LOOP
                  .replace('kind = "open_loop"', 'kind = "relin_study"')
                  .replace('mode = "b_to_a"',
                           'mode = "b_to_a"\nmetric_window_s = 10.0\n'
                           'relin_periods_s = [0.0, 5.0]'))
    study = _write(tmp_path, study_text, name="ministudy.toml")

    _rerun_identical(["simulate", "--scenario", str(mini)], tmp_path, "sim")
    _rerun_identical(["linearize", "--at", str(point)], tmp_path, "lin")
    _rerun_identical(["track", "--scenario", str(hold)], tmp_path, "trk")
    _rerun_identical(["relin-study", "--scenario", str(study)], tmp_path,
                     "study")
    _rerun_identical(["validate", "--case", "1"], tmp_path, "val")
