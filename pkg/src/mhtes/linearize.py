"""Affine linearization of the plant and exact zero-order-hold discretization.

Jacobians come from central finite differences with per-component step
floors sized to each quantity's scale. The result is the affine model

    d(dx)/dt = A dx + B du + B_d dd + f0,      y = g0 + C dx + D du + D_d dd

about an arbitrary (not necessarily equilibrium) operating point; ``f0``
carries the local drift. Discretization maps the whole affine system
through one matrix exponential of the augmented block matrix, which is
exact for piecewise-constant inputs.

A reactor-grouped index permutation is provided for presentation: state
order [T_A, P_A, w_A, T_B, P_B, w_B] groups each reactor's variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import backend, core
from .plant import PlantConfig, _as_dist_array, _as_input_array, _as_state_array

__all__ = [
    "LinearModel",
    "DiscreteModel",
    "linearize",
    "discretize",
    "eval_linear",
    "GROUPED_ORDER",
    "to_grouped",
    "FD_REL_STEP",
    "STATE_STEP_FLOORS",
    "INPUT_STEP_FLOORS",
    "DIST_STEP_FLOORS",
]

FD_REL_STEP = 1e-6
STATE_STEP_FLOORS = np.array([1e-4, 1e-4, 1e-1, 1e-1, 1e-9, 1e-9])
INPUT_STEP_FLOORS = np.array([1e-6, 1e-6, 1e-2])
DIST_STEP_FLOORS = np.array([1e-4, 1e-4])

# Permutation taking [T_A, T_B, P_A, P_B, w_A, w_B] to reactor-grouped
# [T_A, P_A, w_A, T_B, P_B, w_B].
GROUPED_ORDER = (0, 2, 4, 1, 3, 5)


@dataclass(frozen=True)
class LinearModel:
    """Continuous-time affine model about (x0, u0, d0)."""

    A: np.ndarray
    B: np.ndarray
    B_d: np.ndarray
    C: np.ndarray
    D: np.ndarray
    D_d: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    d0: np.ndarray
    f0: np.ndarray
    g0: np.ndarray
    warnings: tuple


@dataclass(frozen=True)
class DiscreteModel:
    """Exact zero-order-hold discretization of a LinearModel."""

    A_d: np.ndarray
    B_du: np.ndarray
    B_dd: np.ndarray
    drift: np.ndarray
    C: np.ndarray
    D: np.ndarray
    D_d: np.ndarray
    T_s: float
    x0: np.ndarray
    u0: np.ndarray
    d0: np.ndarray
    g0: np.ndarray


def _rhs_fn(cfg: PlantConfig):
    out = np.empty(6)

    def f(x, u, d):
        backend.rhs(x, u, d, cfg.packed, out)
        return out.copy()

    return f


def _output_fn(cfg: PlantConfig):
    p = cfg.params

    def g(x, u, d):
        Q_A, _ = core.heat_rate(x[0], d[0], u[0], p.geometry_A, p.fluid)
        Q_B, _ = core.heat_rate(x[1], d[1], u[1], p.geometry_B, p.fluid)
        return np.array([Q_A, Q_B])

    return g


def _central_jacobian(fn, v0, floors, n_out, lower=None):
    """Second-order Jacobian columns; one-sided at a domain boundary.

    Central differences everywhere the minus sample stays inside the
    domain. Where ``v0[j] - h`` would cross ``lower[j]`` (a zero fluid
    flow, for instance), the column switches to the second-order forward
    stencil so linearizing at an input bound stays well defined.
    """
    n = v0.size
    J = np.empty((n_out, n))
    for j in range(n):
        h = max(floors[j], FD_REL_STEP * abs(v0[j]))
        vp = v0.copy()
        vm = v0.copy()
        if lower is not None and v0[j] - h < lower[j]:
            vp[j] += h
            vm[j] += 2.0 * h
            J[:, j] = (4.0 * fn(vp) - fn(vm) - 3.0 * fn(v0)) / (2.0 * h)
        else:
            vp[j] += h
            vm[j] -= h
            J[:, j] = (fn(vp) - fn(vm)) / (2.0 * h)
    return J


def _dead_zone_warnings(x0: np.ndarray, cfg: PlantConfig) -> list[str]:
    msgs = []
    p = cfg.params
    for name, (iT, iP, iw), mat in (("A", (0, 2, 4), p.material_A),
                                    ("B", (1, 3, 5), p.material_B)):
        h_P = max(STATE_STEP_FLOORS[iP], FD_REL_STEP * abs(x0[iP]))
        w_lo = 1e-9 * mat.w_max
        w_hi = (1.0 - 1e-9) * mat.w_max
        w_eq = min(max(x0[iw], w_lo), w_hi)
        for direction in ("abs", "des"):
            P_eq = core.equilibrium_pressure(w_eq, x0[iT], mat, direction)
            if abs(x0[iP] - P_eq) <= h_P:
                msgs.append(
                    f"reactor {name}: pressure within one finite-difference step "
                    f"of the {direction} equilibrium ({P_eq:.6g} Pa); the reaction "
                    f"branch kinks here and one-sided curvature leaks into the Jacobian"
                )
    return msgs


def _line_warning(x0: np.ndarray, u0: np.ndarray, cfg: PlantConfig) -> list[str]:
    if cfg.mode == core.MODE_B_TO_A:
        delta = x0[3] + u0[2] - x0[2]
    else:
        delta = x0[2] + u0[2] - x0[3]
    p_reg = cfg.params.line.regularization_pressure
    if abs(delta) < p_reg:
        return [
            f"hydrogen line inside the regularization band (|driving difference| = "
            f"{abs(delta):.6g} Pa < {p_reg:.6g} Pa); the flow law is locally cubic "
            f"and its slope differs from the square-root branch"
        ]
    return []


def linearize(state, inp, dist, cfg: PlantConfig) -> LinearModel:
    """Linearize plant dynamics and heat-rate outputs about an operating point.

    Warnings (in ``.warnings``) flag operating points where a model kink sits
    within one finite-difference step: either reactor near a reaction
    dead-zone boundary, or the hydrogen line inside its regularization band.
    """
    x0 = _as_state_array(state).copy()
    u0 = _as_input_array(inp).copy()
    d0 = _as_dist_array(dist).copy()
    f = _rhs_fn(cfg)
    g = _output_fn(cfg)

    input_lower = np.array([0.0, 0.0, -np.inf])
    A = _central_jacobian(lambda v: f(v, u0, d0), x0, STATE_STEP_FLOORS, 6)
    B = _central_jacobian(lambda v: f(x0, v, d0), u0, INPUT_STEP_FLOORS, 6,
                          lower=input_lower)
    B_d = _central_jacobian(lambda v: f(x0, u0, v), d0, DIST_STEP_FLOORS, 6)
    C = _central_jacobian(lambda v: g(v, u0, d0), x0, STATE_STEP_FLOORS, 2)
    D = _central_jacobian(lambda v: g(x0, v, d0), u0, INPUT_STEP_FLOORS, 2,
                          lower=input_lower)
    D_d = _central_jacobian(lambda v: g(x0, u0, v), d0, DIST_STEP_FLOORS, 2)
    f0 = f(x0, u0, d0)
    g0 = g(x0, u0, d0)

    warnings = _dead_zone_warnings(x0, cfg) + _line_warning(x0, u0, cfg)
    return LinearModel(A=A, B=B, B_d=B_d, C=C, D=D, D_d=D_d,
                       x0=x0, u0=u0, d0=d0, f0=f0, g0=g0,
                       warnings=tuple(warnings))


def discretize(lm: LinearModel, T_s: float) -> DiscreteModel:
    """Exact zero-order-hold discretization, affine drift included.

    One matrix exponential of the augmented block

        [[A, B, B_d, f0],
         [0, 0, 0,   0 ]] * T_s

    yields A_d, the held-input responses B_du and B_dd, and the drift
    vector in its last column.
    """
    if T_s <= 0.0:
        raise ValueError(f"T_s must be positive, got {T_s}")
    n, m, q = 6, 3, 2
    M = np.zeros((n + m + q + 1, n + m + q + 1))
    M[:n, :n] = lm.A
    M[:n, n:n + m] = lm.B
    M[:n, n + m:n + m + q] = lm.B_d
    M[:n, n + m + q] = lm.f0
    E = expm(M * T_s)
    return DiscreteModel(
        A_d=E[:n, :n], B_du=E[:n, n:n + m], B_dd=E[:n, n + m:n + m + q],
        drift=E[:n, n + m + q], C=lm.C.copy(), D=lm.D.copy(), D_d=lm.D_d.copy(),
        T_s=T_s, x0=lm.x0.copy(), u0=lm.u0.copy(), d0=lm.d0.copy(), g0=lm.g0.copy())


def eval_linear(lm: LinearModel, x, u, d) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the affine model at an absolute (x, u, d) point.

    Returns the state derivative and the output vector. At the operating
    point itself this is exactly (f0, g0).
    """
    dx = np.asarray(x, dtype=float) - lm.x0
    du = np.asarray(u, dtype=float) - lm.u0
    dd = np.asarray(d, dtype=float) - lm.d0
    f = lm.f0 + lm.A @ dx + lm.B @ du + lm.B_d @ dd
    y = lm.g0 + lm.C @ dx + lm.D @ du + lm.D_d @ dd
    return f, y


def to_grouped(mat: np.ndarray) -> np.ndarray:
    """Reindex a matrix into reactor-grouped state order.

    Square 6x6 matrices permute both axes; 6-row matrices (B, B_d) permute
    rows; 6-column matrices (C) permute columns; 6-vectors permute entries.
    """
    perm = list(GROUPED_ORDER)
    a = np.asarray(mat)
    if a.ndim == 1 and a.shape[0] == 6:
        return a[perm]
    if a.ndim == 2 and a.shape == (6, 6):
        return a[np.ix_(perm, perm)]
    if a.ndim == 2 and a.shape[0] == 6:
        return a[perm, :]
    if a.ndim == 2 and a.shape[1] == 6:
        return a[:, perm]
    raise ValueError(f"cannot group matrix of shape {a.shape}")
