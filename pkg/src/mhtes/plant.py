"""Two-reactor plant: state containers, dynamics, and integration.

The plant couples two hydride beds through a compressor-boosted hydrogen
line; per-tube control volumes scale by the tube count, which enters the
dynamics only through the line flow split. State order everywhere is
``[T_hyd_A, T_hyd_B, P_H_A, P_H_B, w_A, w_B]``; inputs are
``[mdot_wg_A, mdot_wg_B, dP_comp]`` and disturbances ``[T_wg_in_A,
T_wg_in_B]``.

Integration restarts at every input and disturbance breakpoint, shortens
steps to land exactly on sample times, and re-anchors (fresh Jacobian,
reduced step) whenever a bed crosses into or out of its reaction dead zone
between accepted steps.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import backend, core
from ._layout import (
    G_AC,
    G_C_WG,
    G_CP_H,
    G_INV_NTUBES,
    G_K_WG,
    G_KLOSS,
    G_MODE_SIGN,
    G_MU_WG,
    G_PR_WG,
    G_PREG,
    G_R_H,
    NPACK,
    NPR,
    P_A_PHASE,
    P_A_S,
    P_C_A,
    P_D_TUBE,
    P_DH0_ABS,
    P_DH0_DES,
    P_DH_ABS,
    P_DH_DES,
    P_DS0_ABS,
    P_DS0_DES,
    P_E_A,
    P_M_HYD,
    P_MC_HYD,
    P_MU_A0,
    P_MU_B0,
    P_PHIV,
    P_TWO_R_TC,
    P_W_A0,
    P_W_B0,
    P_W_MAX,
    R_A,
    R_B,
)
from .core import MODE_A_TO_B, MODE_B_TO_A, DomainError, R_GAS
from .params import HydrideMaterial, PlantParams, ReactorGeometry
from .stiff import IntegrationError, StepStats, trbdf2

__all__ = [
    "SystemState",
    "ControlInput",
    "Disturbance",
    "PlantConfig",
    "PiecewiseConstant",
    "Trajectory",
    "CSV_HEADER",
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "state_derivative",
    "derived_outputs",
    "hydrogen_inventory",
    "integrate",
    "advance",
]

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = np.array([1e-6, 1e-6, 1e-2, 1e-2, 1e-12, 1e-12])

CSV_HEADER = (
    "t,T_hyd_A,T_hyd_B,P_H_A,P_H_B,w_A,w_B,"
    "mdot_wg_A,mdot_wg_B,dP_comp,T_wg_in_A,T_wg_in_B,Q_A,Q_B,r_A,r_B"
)


@dataclass(frozen=True)
class SystemState:
    """Plant state: bed temperatures (K), gas pressures (Pa), weight fractions."""

    T_hyd_A: float
    T_hyd_B: float
    P_H_A: float
    P_H_B: float
    w_A: float
    w_B: float

    def as_array(self) -> np.ndarray:
        return np.array([self.T_hyd_A, self.T_hyd_B, self.P_H_A, self.P_H_B,
                         self.w_A, self.w_B])

    @classmethod
    def from_array(cls, arr) -> "SystemState":
        a = np.asarray(arr, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]),
                   float(a[4]), float(a[5]))


@dataclass(frozen=True)
class ControlInput:
    """Manipulated inputs: fluid mass flows (kg/s) and compressor boost (Pa)."""

    mdot_wg_A: float
    mdot_wg_B: float
    dP_comp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mdot_wg_A, self.mdot_wg_B, self.dP_comp])

    @classmethod
    def from_array(cls, arr) -> "ControlInput":
        a = np.asarray(arr, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Disturbance:
    """Fluid inlet temperatures (K) on the two reactor loops."""

    T_wg_in_A: float
    T_wg_in_B: float

    def as_array(self) -> np.ndarray:
        return np.array([self.T_wg_in_A, self.T_wg_in_B])

    @classmethod
    def from_array(cls, arr) -> "Disturbance":
        a = np.asarray(arr, dtype=float)
        return cls(float(a[0]), float(a[1]))


def _pack_reactor(pk: np.ndarray, off: int, mat: HydrideMaterial, geom: ReactorGeometry) -> None:
    m_hyd = geom.hydride_mass(mat)
    pk[off + P_M_HYD] = m_hyd
    pk[off + P_MC_HYD] = m_hyd * mat.specific_heat
    pk[off + P_PHIV] = mat.porosity * geom.shell_volume
    pk[off + P_DH_ABS] = mat.dH_abs
    pk[off + P_DH_DES] = mat.dH_des
    pk[off + P_W_MAX] = mat.w_max
    pk[off + P_C_A] = mat.C_A
    pk[off + P_E_A] = mat.E_A
    pk[off + P_DH0_ABS] = mat.dH0_abs
    pk[off + P_DS0_ABS] = mat.dS0_abs
    pk[off + P_DH0_DES] = mat.dH0_des
    pk[off + P_DS0_DES] = mat.dS0_des
    pk[off + P_A_PHASE] = mat.A_phase
    pk[off + P_D_TUBE] = geom.tube_diameter
    pk[off + P_A_S] = geom.tube_surface_area
    pk[off + P_MU_A0] = mat.mu_alpha0
    pk[off + P_MU_B0] = mat.mu_beta0
    pk[off + P_W_A0] = mat.w_alpha0
    pk[off + P_W_B0] = mat.w_beta0
    pk[off + P_TWO_R_TC] = 2.0 * R_GAS * mat.T_c


@dataclass
class PlantConfig:
    """Parameters plus the compressor routing mode, with the packed vector
    shared by both kernel backends."""

    params: PlantParams
    mode: str
    packed: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in (MODE_B_TO_A, MODE_A_TO_B):
            raise DomainError(
                f"mode must be {MODE_B_TO_A!r} or {MODE_A_TO_B!r}, got {self.mode!r}"
            )
        p = self.params
        pk = np.zeros(NPACK)
        pk[G_R_H] = p.gas.gas_constant
        pk[G_CP_H] = p.gas.specific_heat
        pk[G_C_WG] = p.fluid.specific_heat
        pk[G_AC] = p.line.cross_section
        pk[G_KLOSS] = p.line.loss_coefficient
        pk[G_PREG] = p.line.regularization_pressure
        pk[G_MODE_SIGN] = 1.0 if self.mode == MODE_B_TO_A else -1.0
        pk[G_INV_NTUBES] = 1.0 / p.geometry_A.n_tubes
        pk[G_MU_WG] = p.fluid.dynamic_viscosity
        pk[G_PR_WG] = p.fluid.prandtl
        pk[G_K_WG] = p.fluid.thermal_conductivity
        _pack_reactor(pk, R_A, p.material_A, p.geometry_A)
        _pack_reactor(pk, R_B, p.material_B, p.geometry_B)
        pk.flags.writeable = False
        self.packed = pk


def _as_state_array(state) -> np.ndarray:
    if isinstance(state, SystemState):
        return state.as_array()
    a = np.asarray(state, dtype=float)
    if a.shape != (6,):
        raise DomainError(f"state must have 6 components, got shape {a.shape}")
    return a


def _as_input_array(inp) -> np.ndarray:
    if isinstance(inp, ControlInput):
        return inp.as_array()
    a = np.asarray(inp, dtype=float)
    if a.shape != (3,):
        raise DomainError(f"input must have 3 components, got shape {a.shape}")
    return a


def _as_dist_array(dist) -> np.ndarray:
    if isinstance(dist, Disturbance):
        return dist.as_array()
    a = np.asarray(dist, dtype=float)
    if a.shape != (2,):
        raise DomainError(f"disturbance must have 2 components, got shape {a.shape}")
    return a


_STATE_NAMES = ("T_hyd_A", "T_hyd_B", "P_H_A", "P_H_B", "w_A", "w_B")


def _check_physical(x: np.ndarray, cfg: PlantConfig) -> None:
    for i in (0, 1):
        if not x[i] > 0.0:
            raise DomainError(f"{_STATE_NAMES[i]} = {x[i]} must be positive")
    for i in (2, 3):
        if not x[i] > 0.0:
            raise DomainError(f"{_STATE_NAMES[i]} = {x[i]} must be positive")
    w_max_A = cfg.params.material_A.w_max
    w_max_B = cfg.params.material_B.w_max
    if not 0.0 <= x[4] <= w_max_A:
        raise DomainError(f"w_A = {x[4]} outside [0, {w_max_A}]")
    if not 0.0 <= x[5] <= w_max_B:
        raise DomainError(f"w_B = {x[5]} outside [0, {w_max_B}]")


def state_derivative(state, inp, dist, cfg: PlantConfig) -> np.ndarray:
    """Time derivative of the plant state, as an array in state order.

    Validates physical bounds (positive temperatures and pressures, weight
    fractions inside [0, w_max], nonnegative fluid flows) and raises
    ``DomainError`` naming the offending component. The raw kernels skip the
    checks so the implicit integrator may probe freely.
    """
    x = _as_state_array(state)
    u = _as_input_array(inp)
    d = _as_dist_array(dist)
    _check_physical(x, cfg)
    if u[0] < 0.0 or u[1] < 0.0:
        bad = "mdot_wg_A" if u[0] < 0.0 else "mdot_wg_B"
        raise DomainError(f"{bad} must be nonnegative")
    out = np.empty(6)
    backend.rhs(x, u, d, cfg.packed, out)
    return out


def derived_outputs(state, inp, dist, cfg: PlantConfig) -> tuple[float, float, float, float]:
    """(Q_A, Q_B, r_A, r_B): heat rates to the fluid (W, full reactor) and
    reaction rates (1/s) at the given operating point."""
    x = _as_state_array(state)
    u = _as_input_array(inp)
    d = _as_dist_array(dist)
    p = cfg.params
    Q_A, _ = core.heat_rate(x[0], d[0], u[0], p.geometry_A, p.fluid)
    Q_B, _ = core.heat_rate(x[1], d[1], u[1], p.geometry_B, p.fluid)
    r_A = core.reaction_rate(x[0], x[2], x[4], p.material_A)
    r_B = core.reaction_rate(x[1], x[3], x[5], p.material_B)
    return Q_A, Q_B, r_A, r_B


def hydrogen_inventory(state, cfg: PlantConfig) -> float:
    """Total hydrogen mass in the plant (gas plus absorbed), kg.

    Conserved exactly by the continuous dynamics; integration accuracy is
    judged by its drift.
    """
    x = _as_state_array(state)
    p = cfg.params
    pk = cfg.packed
    n = p.geometry_A.n_tubes
    gas_A = pk[R_A + P_PHIV] * x[2] / (p.gas.gas_constant * x[0])
    gas_B = pk[R_B + P_PHIV] * x[3] / (p.gas.gas_constant * x[1])
    absorbed_A = x[4] * pk[R_A + P_M_HYD]
    absorbed_B = x[5] * pk[R_B + P_M_HYD]
    return n * (gas_A + absorbed_A + gas_B + absorbed_B)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Left-continuous step schedule: value(t) is the entry at the last
    breakpoint <= t, and the first entry before all breakpoints."""

    times: tuple
    values: tuple

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise DomainError("schedule needs matching, nonempty times and values")
        for a, b in zip(self.times, self.times[1:]):
            if b <= a:
                raise DomainError("schedule breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value) -> "PiecewiseConstant":
        return cls((-math.inf,), (np.asarray(value, dtype=float),))

    def __call__(self, t: float) -> np.ndarray:
        idx = bisect_right(self.times, t) - 1
        if idx < 0:
            idx = 0
        return self.values[idx]

    def breakpoints_within(self, t0: float, t1: float) -> list[float]:
        return [t for t in self.times if t0 < t < t1]


def _promote_schedule(obj, to_array) -> PiecewiseConstant:
    if isinstance(obj, PiecewiseConstant):
        return obj
    return PiecewiseConstant.constant(to_array(obj))


@dataclass
class Trajectory:
    """Sampled trajectory with applied inputs and derived outputs per sample."""

    t: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    disturbances: np.ndarray
    heat_rates: np.ndarray
    rates: np.ndarray

    def row_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.t, t))
        if idx >= self.t.size or self.t[idx] != t:
            raise KeyError(f"no sample at t = {t}")
        return idx

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(CSV_HEADER + "\n")
            for i in range(self.t.size):
                row = [self.t[i], *self.states[i], *self.inputs[i],
                       *self.disturbances[i], *self.heat_rates[i], *self.rates[i]]
                f.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != CSV_HEADER:
                raise ValueError(f"unexpected trajectory header: {header!r}")
            data = [[float(v) for v in line.rstrip("\n").split(",")] for line in f if line.strip()]
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 16:
            raise ValueError("trajectory rows must have 16 columns")
        return cls(t=arr[:, 0], states=arr[:, 1:7], inputs=arr[:, 7:10],
                   disturbances=arr[:, 10:12], heat_rates=arr[:, 12:14],
                   rates=arr[:, 14:16])


def _branch_indicator(T: float, P: float, w: float, mat: HydrideMaterial) -> int:
    w_lo = 1e-9 * mat.w_max
    w_hi = (1.0 - 1e-9) * mat.w_max
    w_eq = min(max(w, w_lo), w_hi)
    if P > core.equilibrium_pressure(w_eq, T, mat, "abs"):
        return 1
    if P < core.equilibrium_pressure(w_eq, T, mat, "des"):
        return -1
    return 0


def _segment_runner(cfg: PlantConfig, rtol: float, atol: np.ndarray):
    """Returns a function integrating one constant-input segment with
    dead-zone restart monitoring and physicality checks at accepted steps."""
    pk = cfg.packed
    mat_A = cfg.params.material_A
    mat_B = cfg.params.material_B
    w_max_A = mat_A.w_max
    w_max_B = mat_B.w_max

    def run(x0: np.ndarray, u: np.ndarray, d: np.ndarray, t0: float, t1: float,
            must_hit: Sequence[float], collect) -> tuple[np.ndarray, StepStats]:
        out = np.empty(6)

        def f(t, y):
            backend.rhs(y, u, d, pk, out)
            return out.copy()

        branch = [
            _branch_indicator(x0[0], x0[2], x0[4], mat_A),
            _branch_indicator(x0[1], x0[3], x0[5], mat_B),
        ]

        def on_accept(t_prev, y_prev, t_new, y_new):
            if not (y_new[0] > 0.0 and y_new[1] > 0.0 and y_new[2] > 0.0 and y_new[3] > 0.0):
                raise IntegrationError("temperature or pressure left the physical domain",
                                       t_new, y_new)
            if y_new[4] < -1e-9 or y_new[4] > w_max_A * (1.0 + 1e-9):
                raise IntegrationError("w_A left [0, w_max]", t_new, y_new)
            if y_new[5] < -1e-9 or y_new[5] > w_max_B * (1.0 + 1e-9):
                raise IntegrationError("w_B left [0, w_max]", t_new, y_new)
            if collect is not None:
                collect(t_new, y_new)
            b0 = _branch_indicator(y_new[0], y_new[2], y_new[4], mat_A)
            b1 = _branch_indicator(y_new[1], y_new[3], y_new[5], mat_B)
            changed = (b0 != branch[0]) or (b1 != branch[1])
            branch[0] = b0
            branch[1] = b1
            return changed

        return trbdf2(f, t0, x0, t1, rtol=rtol, atol=atol,
                      must_hit=must_hit, on_accept=on_accept)

    return run


def advance(x0, inp, dist, t0: float, t1: float, cfg: PlantConfig, *,
            rtol: float = DEFAULT_RTOL, atol=None) -> np.ndarray:
    """Integrate with constant input and disturbance from t0 to t1; returns
    the final state array."""
    x = _as_state_array(x0)
    u = _as_input_array(inp)
    d = _as_dist_array(dist)
    _check_physical(x, cfg)
    a = DEFAULT_ATOL if atol is None else np.asarray(atol, dtype=float)
    run = _segment_runner(cfg, rtol, a)
    y, _ = run(x, u, d, t0, t1, (), None)
    return y


def integrate(x0, inp, dist, t_span: tuple[float, float], cfg: PlantConfig, *,
              rtol: float = DEFAULT_RTOL, atol=None, sample_dt: float = 1.0) -> Trajectory:
    """Simulate the plant over ``t_span``; sample every ``sample_dt``.

    ``inp`` and ``dist`` may be constants (ControlInput / Disturbance /
    arrays) or ``PiecewiseConstant`` schedules. The integrator restarts at
    every schedule breakpoint, so no step straddles a discontinuity, and
    lands exactly on every sample time. Breakpoints are sampled even when
    they fall off the reporting grid; a sample at a breakpoint carries the
    new segment's input values.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 < t0:
        raise DomainError(f"t_span must be nondecreasing, got {t_span}")
    x = _as_state_array(x0)
    _check_physical(x, cfg)
    u_sched = _promote_schedule(inp, _as_input_array)
    d_sched = _promote_schedule(dist, _as_dist_array)
    a = DEFAULT_ATOL if atol is None else np.asarray(atol, dtype=float)

    n_samples = int(math.floor((t1 - t0) / sample_dt + 1e-9))
    sample_times = [t0 + k * sample_dt for k in range(n_samples + 1)]
    if sample_times[-1] < t1 - 1e-12 * max(1.0, abs(t1)):
        sample_times.append(t1)
    else:
        sample_times[-1] = t1

    breaks = sorted(set(u_sched.breakpoints_within(t0, t1))
                    | set(d_sched.breakpoints_within(t0, t1)))
    bounds = [t0, *breaks, t1]
    sample_times = sorted(set(sample_times) | set(breaks))

    samples: list[np.ndarray] = [x.copy()]

    def collect(t_new, y_new):
        while pending and t_new == pending[0]:
            pending.pop(0)
            samples.append(np.array(y_new, copy=True))

    run = _segment_runner(cfg, rtol, a)
    for seg_start, seg_end in zip(bounds, bounds[1:]):
        if seg_end <= seg_start:
            continue
        u = np.array(u_sched(seg_start), dtype=float)
        d = np.array(d_sched(seg_start), dtype=float)
        if u[0] < 0.0 or u[1] < 0.0:
            bad = "mdot_wg_A" if u[0] < 0.0 else "mdot_wg_B"
            raise DomainError(f"{bad} must be nonnegative from t = {seg_start}")
        pending = [s for s in sample_times if seg_start < s <= seg_end]
        hits = list(pending)
        x, _ = run(x, u, d, seg_start, seg_end, hits, collect)

    if len(samples) != len(sample_times):
        raise IntegrationError(
            f"sampling mismatch: {len(samples)} collected for {len(sample_times)} times",
            t1, x)

    t_arr = np.array(sample_times)
    states = np.vstack(samples)
    inputs = np.vstack([u_sched(t) for t in sample_times])
    dists = np.vstack([d_sched(t) for t in sample_times])
    heat = np.empty((t_arr.size, 2))
    rates = np.empty((t_arr.size, 2))
    p = cfg.params
    for i in range(t_arr.size):
        Qa, _ = core.heat_rate(states[i, 0], dists[i, 0], inputs[i, 0], p.geometry_A, p.fluid)
        Qb, _ = core.heat_rate(states[i, 1], dists[i, 1], inputs[i, 1], p.geometry_B, p.fluid)
        heat[i, 0] = Qa
        heat[i, 1] = Qb
        rates[i, 0] = core.reaction_rate(states[i, 0], states[i, 2], states[i, 4], p.material_A)
        rates[i, 1] = core.reaction_rate(states[i, 1], states[i, 3], states[i, 5], p.material_B)
    return Trajectory(t=t_arr, states=states, inputs=inputs, disturbances=dists,
                      heat_rates=heat, rates=rates)
