"""Scenario definitions, loading, and the simulation runners built on them.

A scenario TOML names the compressor mode, the initial operating point, and
sparse schedules: each ``[[schedule.u]]`` / ``[[schedule.d]]`` /
``[[schedule.r]]`` entry gives a time and only the fields that change, with
unspecified fields holding their previous values. Four kinds exist:

- ``open_loop``: integrate the plant under the schedules.
- ``validation``: co-simulate the linear model from the same point and
  score windowed NRMSE against the nonlinear run, pooling normalizer
  ranges with a companion scenario's nonlinear run.
- ``relin_study``: propagate several linear variants that differ only in
  how often they re-linearize about their own trajectory, scoring windowed
  heat-rate RMSE against the shared nonlinear reference.
- ``closed_loop``: run the tracking controller against the plant.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import MODE_A_TO_B, MODE_B_TO_A
from .linearize import discretize, linearize
from .metrics import nrmse_table, pooled_ranges, type_normalizers, windowed_rmse
from .mpc import ControllerConfig, MPCController
from .params import ConfigError, PlantParams
from .plant import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    PiecewiseConstant,
    PlantConfig,
    Trajectory,
    advance,
    derived_outputs,
    integrate,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "Scenario",
    "load_scenario",
    "packaged_scenario",
    "packaged_scenario_names",
    "resolve_scenario",
    "run_open_loop",
    "simulate_linear",
    "ValidationResult",
    "run_validation",
    "RelinStudyResult",
    "run_relin_study",
    "ControlLog",
    "CTRL_CSV_HEADER",
    "ClosedLoopResult",
    "run_closed_loop",
]

_KINDS = ("open_loop", "validation", "relin_study", "closed_loop")

_STATE_KEYS = ("T_hyd_A", "T_hyd_B", "P_H_A", "P_H_B", "w_A", "w_B")
_INPUT_KEYS = ("mdot_wg_A", "mdot_wg_B", "dP_comp")
_DIST_KEYS = ("T_wg_in_A", "T_wg_in_B")
_REF_KEYS = ("Q_A", "Q_B")

_CTRL_KEYS = {
    "horizon": "horizon",
    "q_integrator": "q_integrator",
    "r_move": "r_move",
    "u_min": "u_min",
    "u_max": "u_max",
    "du_max": "du_max",
    "relin_period_s": "relin_period",
    "max_hold_steps": "max_hold_steps",
}

CTRL_CSV_HEADER = "t,Q_ref_A,Q_ref_B,x_i_A,x_i_B,qp_iterations,relinearized,held"


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario ready to run."""

    name: str
    kind: str
    mode: str
    duration_s: float
    x0: np.ndarray
    u0: np.ndarray
    d0: np.ndarray
    u_sched: PiecewiseConstant
    d_sched: PiecewiseConstant
    r_sched: PiecewiseConstant | None
    companion: str | None
    relin_periods: tuple | None
    metric_window_s: float | None
    control_dt: float | None
    controller: ControllerConfig | None


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _take_table(doc: dict, key: str, where: str) -> dict:
    if key not in doc:
        raise ConfigError(f"{where}{key}" if where else key, "missing required table")
    val = doc.pop(key)
    if not isinstance(val, dict):
        raise ConfigError(key, f"expected a table, got {type(val).__name__}")
    return dict(val)


def _fixed_vector(tbl: dict, keys, where: str) -> np.ndarray:
    out = np.empty(len(keys))
    for i, k in enumerate(keys):
        if k not in tbl:
            raise ConfigError(f"{where}.{k}", "missing required value")
        out[i] = _num(tbl.pop(k), f"{where}.{k}")
    if tbl:
        raise ConfigError(f"{where}.{sorted(tbl)[0]}", "unknown field")
    return out


def _build_schedule(entries, keys, base: np.ndarray, duration: float,
                    where: str) -> PiecewiseConstant:
    times = [0.0]
    values = [np.array(base, dtype=float)]
    if entries is None:
        return PiecewiseConstant(tuple(times), tuple(values))
    if not isinstance(entries, list):
        raise ConfigError(where, "expected an array of tables")
    for idx, entry in enumerate(entries):
        path = f"{where}[{idx}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected a table")
        entry = dict(entry)
        if "t" not in entry:
            raise ConfigError(f"{path}.t", "missing required value")
        t = _num(entry.pop("t"), f"{path}.t")
        if not 0.0 < t < duration:
            raise ConfigError(f"{path}.t", f"must lie strictly inside (0, {duration})")
        if t <= times[-1] and len(times) > 1:
            raise ConfigError(f"{path}.t", "schedule times must be strictly increasing")
        if not entry:
            raise ConfigError(path, "entry changes nothing")
        v = values[-1].copy()
        for k, raw in entry.items():
            if k not in keys:
                raise ConfigError(f"{path}.{k}", "unknown field")
            v[keys.index(k)] = _num(raw, f"{path}.{k}")
        times.append(t)
        values.append(v)
    return PiecewiseConstant(tuple(times), tuple(values))


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario TOML file."""
    p = Path(path)
    try:
        doc = tomllib.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(str(p), "scenario file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(p), f"invalid TOML: {exc}") from None

    kind = doc.pop("kind", None)
    if kind not in _KINDS:
        raise ConfigError("kind", f"must be one of {_KINDS}, got {kind!r}")
    mode = doc.pop("mode", None)
    if mode not in (MODE_B_TO_A, MODE_A_TO_B):
        raise ConfigError("mode", f"must be {MODE_B_TO_A!r} or {MODE_A_TO_B!r}, got {mode!r}")
    duration = _num(doc.pop("duration_s", None) or 0.0, "duration_s")
    if duration <= 0.0:
        raise ConfigError("duration_s", "must be positive")

    x0 = _fixed_vector(_take_table(doc, "initial_state", ""), _STATE_KEYS, "initial_state")
    u0 = _fixed_vector(_take_table(doc, "initial_input", ""), _INPUT_KEYS, "initial_input")
    d0 = _fixed_vector(_take_table(doc, "initial_disturbance", ""), _DIST_KEYS,
                       "initial_disturbance")
    if x0[0] <= 0 or x0[1] <= 0:
        raise ConfigError("initial_state", "temperatures must be positive")
    if x0[2] <= 0 or x0[3] <= 0:
        raise ConfigError("initial_state", "pressures must be positive")
    if u0[0] < 0 or u0[1] < 0:
        raise ConfigError("initial_input", "fluid flows must be nonnegative")

    sched = doc.pop("schedule", {})
    if not isinstance(sched, dict):
        raise ConfigError("schedule", "expected a table")
    sched = dict(sched)
    u_entries = sched.pop("u", None)
    d_entries = sched.pop("d", None)
    r_entries = sched.pop("r", None)
    if sched:
        raise ConfigError(f"schedule.{sorted(sched)[0]}", "unknown schedule group")
    if kind == "closed_loop" and u_entries is not None:
        raise ConfigError("schedule.u", "closed-loop runs compute inputs; no input schedule")
    u_sched = _build_schedule(u_entries, _INPUT_KEYS, u0, duration, "schedule.u")
    d_sched = _build_schedule(d_entries, _DIST_KEYS, d0, duration, "schedule.d")

    companion = None
    metric_window = None
    relin_periods = None
    r_sched = None
    control_dt = None
    controller = None

    if kind in ("validation", "relin_study"):
        metric_window = _num(doc.pop("metric_window_s", None) or 0.0, "metric_window_s")
        if metric_window <= 0.0:
            raise ConfigError("metric_window_s", "must be positive")
    if kind == "validation":
        companion = doc.pop("companion", None)
        if not isinstance(companion, str) or not companion:
            raise ConfigError("companion", "validation scenarios name a companion scenario")
    if kind == "relin_study":
        periods = doc.pop("relin_periods_s", None)
        if not isinstance(periods, list) or not periods:
            raise ConfigError("relin_periods_s", "must be a nonempty list of seconds (0 = never)")
        vals = []
        for i, v in enumerate(periods):
            vals.append(_num(v, f"relin_periods_s[{i}]"))
            if vals[-1] < 0.0:
                raise ConfigError(f"relin_periods_s[{i}]", "must be >= 0 (0 = never)")
        if len(set(vals)) != len(vals):
            raise ConfigError("relin_periods_s", "periods must be distinct")
        relin_periods = tuple(vals)
    if kind == "closed_loop":
        rate = _num(doc.pop("control_rate_hz", 1.0), "control_rate_hz")
        if rate <= 0.0:
            raise ConfigError("control_rate_hz", "must be positive")
        control_dt = 1.0 / rate
        r0 = _fixed_vector(_take_table(doc, "initial_reference", ""), _REF_KEYS,
                           "initial_reference")
        r_sched = _build_schedule(r_entries, _REF_KEYS, r0, duration, "schedule.r")
        ctrl_tbl = doc.pop("controller", {})
        if not isinstance(ctrl_tbl, dict):
            raise ConfigError("controller", "expected a table")
        kwargs = {"T_s": control_dt}
        for key, value in dict(ctrl_tbl).items():
            if key not in _CTRL_KEYS:
                raise ConfigError(f"controller.{key}", "unknown controller setting")
            if key == "horizon":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError("controller.horizon", "must be an integer")
                kwargs["horizon"] = value
            elif key == "max_hold_steps":
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError("controller.max_hold_steps", "must be an integer")
                kwargs["max_hold_steps"] = value
            elif key == "relin_period_s":
                kwargs["relin_period"] = _num(value, "controller.relin_period_s")
            else:
                if not isinstance(value, list):
                    raise ConfigError(f"controller.{key}", "expected a list")
                kwargs[_CTRL_KEYS[key]] = tuple(
                    _num(v, f"controller.{key}[{i}]") for i, v in enumerate(value))
        try:
            controller = ControllerConfig(**kwargs)
        except Exception as exc:
            raise ConfigError("controller", str(exc)) from None
    elif r_entries is not None:
        raise ConfigError("schedule.r", "references apply to closed-loop scenarios only")

    if doc:
        raise ConfigError(sorted(doc)[0], "unknown field")

    return Scenario(name=p.stem, kind=kind, mode=mode, duration_s=duration,
                    x0=x0, u0=u0, d0=d0, u_sched=u_sched, d_sched=d_sched,
                    r_sched=r_sched, companion=companion,
                    relin_periods=relin_periods, metric_window_s=metric_window,
                    control_dt=control_dt, controller=controller)


def packaged_scenario_names() -> list[str]:
    root = resources.files("mhtes").joinpath("data/scenarios")
    return sorted(pth.name[:-5] for pth in root.iterdir() if pth.name.endswith(".toml"))


def packaged_scenario(name: str) -> Scenario:
    root = resources.files("mhtes").joinpath("data/scenarios")
    target = root.joinpath(f"{name}.toml")
    with resources.as_file(target) as real:
        if not real.exists():
            raise ConfigError(name, f"no packaged scenario named {name!r}; "
                                    f"available: {packaged_scenario_names()}")
        return load_scenario(real)


def resolve_scenario(ref: str, base_dir: Path | None = None) -> Scenario:
    """A packaged scenario name, or a path to a scenario file."""
    if ref in packaged_scenario_names():
        return packaged_scenario(ref)
    p = Path(ref)
    if base_dir is not None and not p.is_absolute():
        candidate = base_dir / p
        if candidate.exists():
            return load_scenario(candidate)
    return load_scenario(p)


def run_open_loop(sc: Scenario, params: PlantParams, *, rtol: float = DEFAULT_RTOL,
                  atol=None) -> Trajectory:
    """Integrate the plant under the scenario's schedules."""
    cfg = PlantConfig(params, sc.mode)
    return integrate(sc.x0, sc.u_sched, sc.d_sched, (0.0, sc.duration_s), cfg,
                     rtol=rtol, atol=DEFAULT_ATOL if atol is None else atol)


def _require_on_grid(sched: PiecewiseConstant, duration: float, dt: float, label: str):
    for t in sched.breakpoints_within(0.0, duration):
        if abs(t / dt - round(t / dt)) > 1e-9:
            raise ConfigError(label, f"breakpoint {t} is off the {dt} s grid the "
                                     f"linear propagation is exact on")


def simulate_linear(sc: Scenario, params: PlantParams,
                    relin_period: float | None = None, dt: float = 1.0) -> Trajectory:
    """Propagate the linearized model from the scenario's initial point.

    Exact zero-order-hold stepping on a fixed grid; with ``relin_period``
    set, the model is rebuilt about the linear trajectory's own current
    state every period. Outputs come from the active model's affine output
    map, and the reaction-rate columns are the weight-fraction rows of the
    affine state derivative.
    """
    cfg = PlantConfig(params, sc.mode)
    _require_on_grid(sc.u_sched, sc.duration_s, dt, "schedule.u")
    _require_on_grid(sc.d_sched, sc.duration_s, dt, "schedule.d")
    n = int(round(sc.duration_s / dt))
    if abs(n * dt - sc.duration_s) > 1e-9:
        raise ConfigError("duration_s", f"must be a multiple of the {dt} s grid")

    lm = linearize(sc.x0, sc.u_sched(0.0), sc.d_sched(0.0), cfg)
    dm = discretize(lm, dt)
    relin_every = None
    if relin_period is not None and relin_period > 0.0:
        relin_every = int(round(relin_period / dt))
        if abs(relin_every * dt - relin_period) > 1e-9:
            raise ConfigError("relin_periods_s", f"{relin_period} is off the {dt} s grid")

    t_arr = np.array([k * dt for k in range(n + 1)])
    states = np.empty((n + 1, 6))
    heat = np.empty((n + 1, 2))
    rates = np.empty((n + 1, 2))
    inputs = np.vstack([sc.u_sched(t) for t in t_arr])
    dists = np.vstack([sc.d_sched(t) for t in t_arr])

    delta = np.zeros(6)
    for k in range(n + 1):
        if relin_every is not None and k > 0 and k % relin_every == 0 and k < n:
            x_abs = lm.x0 + delta
            lm = linearize(x_abs, inputs[k], dists[k], cfg)
            dm = discretize(lm, dt)
            delta = np.zeros(6)
        states[k] = lm.x0 + delta
        du = inputs[k] - lm.u0
        dd = dists[k] - lm.d0
        y = lm.g0 + lm.C @ delta + lm.D @ du + lm.D_d @ dd
        heat[k] = y
        dxdt = lm.f0 + lm.A @ delta + lm.B @ du + lm.B_d @ dd
        rates[k] = dxdt[4:6]
        if k < n:
            delta = dm.A_d @ delta + dm.B_du @ du + dm.B_dd @ dd + dm.drift
    return Trajectory(t=t_arr, states=states, inputs=inputs, disturbances=dists,
                      heat_rates=heat, rates=rates)


@dataclass
class ValidationResult:
    scenario: Scenario
    nonlinear: Trajectory
    linear: Trajectory
    normalizers: np.ndarray
    nrmse: np.ndarray
    window_s: float


def run_validation(sc: Scenario, companion: Scenario, params: PlantParams) -> ValidationResult:
    """Score the linear model against the plant over the scenario.

    Normalizer ranges are excursions from each run's initial state, pooled
    with the companion's nonlinear run, and shared per variable type."""
    if sc.kind != "validation":
        raise ConfigError("kind", f"expected a validation scenario, got {sc.kind!r}")
    nl = run_open_loop(sc, params)
    nl_companion = run_open_loop(companion, params)
    lin = simulate_linear(sc, params, None)
    if not np.array_equal(nl.t, lin.t):
        raise RuntimeError("nonlinear and linear sample grids disagree")
    deviations = [nl.states - nl.states[0], nl_companion.states - nl_companion.states[0]]
    normalizers = type_normalizers(pooled_ranges(deviations))
    table = nrmse_table(nl.t, nl.states, lin.states, sc.metric_window_s, normalizers)
    return ValidationResult(scenario=sc, nonlinear=nl, linear=lin,
                            normalizers=normalizers, nrmse=table,
                            window_s=sc.metric_window_s)


@dataclass
class RelinStudyResult:
    scenario: Scenario
    nonlinear: Trajectory
    variants: dict
    heat_rmse: dict
    window_s: float


def run_relin_study(sc: Scenario, params: PlantParams) -> RelinStudyResult:
    """Propagate one linear variant per re-linearization period and score
    windowed heat-rate RMSE against the shared nonlinear reference."""
    if sc.kind != "relin_study":
        raise ConfigError("kind", f"expected a relin_study scenario, got {sc.kind!r}")
    nl = run_open_loop(sc, params)
    variants = {}
    rmse = {}
    for period in sc.relin_periods:
        traj = simulate_linear(sc, params, period if period > 0.0 else None)
        variants[period] = traj
        rmse[period] = windowed_rmse(nl.t, nl.heat_rates, traj.heat_rates,
                                     sc.metric_window_s)
    return RelinStudyResult(scenario=sc, nonlinear=nl, variants=variants,
                            heat_rmse=rmse, window_s=sc.metric_window_s)


@dataclass
class ControlLog:
    """Controller-side log aligned with the closed-loop trajectory samples."""

    t: np.ndarray
    references: np.ndarray
    x_i: np.ndarray
    qp_iterations: np.ndarray
    relinearized: np.ndarray
    held: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(CTRL_CSV_HEADER + "\n")
            for i in range(self.t.size):
                f.write(",".join([
                    repr(float(self.t[i])),
                    repr(float(self.references[i, 0])),
                    repr(float(self.references[i, 1])),
                    repr(float(self.x_i[i, 0])),
                    repr(float(self.x_i[i, 1])),
                    str(int(self.qp_iterations[i])),
                    str(int(self.relinearized[i])),
                    str(int(self.held[i])),
                ]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ControlLog":
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != CTRL_CSV_HEADER:
                raise ValueError(f"unexpected control log header: {header!r}")
            rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
        arr = np.asarray([[float(v) for v in row] for row in rows])
        return cls(t=arr[:, 0], references=arr[:, 1:3], x_i=arr[:, 3:5],
                   qp_iterations=arr[:, 5].astype(int),
                   relinearized=arr[:, 6].astype(bool), held=arr[:, 7].astype(bool))


@dataclass
class ClosedLoopResult:
    scenario: Scenario
    trajectory: Trajectory
    control: ControlLog


def run_closed_loop(sc: Scenario, params: PlantParams, *, rtol: float = DEFAULT_RTOL,
                    atol=None) -> ClosedLoopResult:
    """Run the tracking controller against the plant at the scenario's rate."""
    if sc.kind != "closed_loop":
        raise ConfigError("kind", f"expected a closed_loop scenario, got {sc.kind!r}")
    cfg = PlantConfig(params, sc.mode)
    dt = sc.control_dt
    n = int(round(sc.duration_s / dt))
    a = DEFAULT_ATOL if atol is None else np.asarray(atol, dtype=float)
    ctrl_cfg = sc.controller if sc.controller is not None else ControllerConfig(T_s=dt)
    controller = MPCController(params, sc.mode, ctrl_cfg, sc.x0, sc.u0, sc.d0,
                               sc.r_sched(0.0), 0.0)

    t_arr = np.array([k * dt for k in range(n + 1)])
    states = np.empty((n + 1, 6))
    inputs = np.empty((n + 1, 3))
    dists = np.empty((n + 1, 2))
    refs = np.empty((n + 1, 2))
    x_i = np.empty((n + 1, 2))
    qp_iters = np.zeros(n + 1, dtype=int)
    relin = np.zeros(n + 1, dtype=bool)
    held = np.zeros(n + 1, dtype=bool)

    x = np.array(sc.x0, dtype=float)
    for k in range(n):
        t = t_arr[k]
        r = np.array(sc.r_sched(t), dtype=float)
        d = np.array(sc.d_sched(t), dtype=float)
        res = controller.step(t, x, r, d)
        states[k] = x
        inputs[k] = res.u
        dists[k] = d
        refs[k] = r
        x_i[k] = res.x_i
        qp_iters[k] = res.qp_iterations
        relin[k] = res.relinearized
        held[k] = res.held
        x = advance(x, res.u, d, t, t_arr[k + 1], cfg, rtol=rtol, atol=a)
    states[n] = x
    inputs[n] = inputs[n - 1]
    dists[n] = sc.d_sched(t_arr[n])
    refs[n] = sc.r_sched(t_arr[n])
    x_i[n] = x_i[n - 1]

    heat = np.empty((n + 1, 2))
    rates = np.empty((n + 1, 2))
    for i in range(n + 1):
        Qa, Qb, ra, rb = derived_outputs(states[i], inputs[i], dists[i], cfg)
        heat[i] = (Qa, Qb)
        rates[i] = (ra, rb)
    traj = Trajectory(t=t_arr, states=states, inputs=inputs, disturbances=dists,
                      heat_rates=heat, rates=rates)
    log = ControlLog(t=t_arr, references=refs, x_i=x_i, qp_iterations=qp_iters,
                     relinearized=relin, held=held)
    return ClosedLoopResult(scenario=sc, trajectory=traj, control=log)
