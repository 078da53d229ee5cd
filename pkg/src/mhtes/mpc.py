"""Heat-rate tracking controller: integral-augmented linear MPC.

The plant's affine discretization is augmented with two accumulating
output-error integrators (units W s): x_i(k+1) = x_i(k) + T_s (y(k) - r(k)).
Penalizing only the integrators and the input moves gives offset-free
steady-state tracking as long as the augmented model stays close enough to
the plant, which periodic and setpoint-triggered relinearization maintains.

The horizon cost is condensed to a dense strictly convex QP in the stacked
input deviations; the Hessian, its Cholesky factor, and the constraint
matrix are rebuilt only when the model changes, so each control step costs
one free-response propagation plus an active-set solve started from the
held-input point, which is always feasible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .core import DomainError, heat_rate
from .linearize import DiscreteModel, LinearModel, discretize, linearize
from .params import PlantParams
from .plant import PlantConfig, _as_dist_array, _as_input_array, _as_state_array
from .qp import QPError, solve_qp

__all__ = ["ControllerConfig", "MPCError", "StepResult", "MPCController",
           "propagate_move_intervals"]

log = logging.getLogger(__name__)

_N_STATE = 6
_N_IN = 3
_N_OUT = 2
_N_AUG = _N_STATE + _N_OUT


class MPCError(RuntimeError):
    """Controller failure that holding the last input cannot bridge."""


@dataclass
class ControllerConfig:
    """Tuning and limits for the tracking controller."""

    horizon: int = 20
    T_s: float = 1.0
    q_integrator: tuple = (100.0, 100.0)
    r_move: tuple = (3e11, 3e11, 1.0)
    u_min: tuple = (0.0, 0.0, 0.0)
    u_max: tuple = (0.8, 0.8, 5.0e5)
    du_max: tuple = (0.05, 0.05, 1.0e4)
    relin_period: float = 1800.0
    max_hold_steps: int = 5

    def __post_init__(self):
        if self.horizon < 1:
            raise DomainError("horizon must be at least 1")
        if self.T_s <= 0.0:
            raise DomainError("T_s must be positive")
        if any(q < 0.0 for q in self.q_integrator):
            raise DomainError("integrator weights must be nonnegative")
        if any(r <= 0.0 for r in self.r_move):
            raise DomainError("move weights must be positive")
        for lo, hi in zip(self.u_min, self.u_max):
            if hi <= lo:
                raise DomainError("u_max must exceed u_min componentwise")
        if any(s <= 0.0 for s in self.du_max):
            raise DomainError("du_max must be positive componentwise")


def propagate_move_intervals(lb: np.ndarray, ub: np.ndarray, du: np.ndarray,
                             z_prev: np.ndarray, horizon: int) -> bool:
    """Reachability precheck: can any rate-limited sequence stay inside the box?

    Propagates the reachable interval per input dimension through the
    horizon; returns False when some step's interval is empty. The held
    input is always a witness when the start lies inside the box, so False
    signals genuinely inconsistent constraint data.
    """
    lo = np.array(z_prev, dtype=float)
    hi = np.array(z_prev, dtype=float)
    for _ in range(horizon):
        lo = np.maximum(lb, lo - du)
        hi = np.minimum(ub, hi + du)
        if np.any(lo > hi + 1e-12):
            return False
    return True


@dataclass
class _CondensedQP:
    S: np.ndarray
    QS: np.ndarray
    H: np.ndarray
    H_factor: object
    G: np.ndarray
    h_base: np.ndarray
    rate0_rows: slice
    A_pows: list
    G_sums: list
    At: np.ndarray
    Bt: np.ndarray
    Bdt: np.ndarray
    ht: np.ndarray


def _augment(dm: DiscreteModel, cfg: ControllerConfig):
    T_s = cfg.T_s
    At = np.zeros((_N_AUG, _N_AUG))
    At[:_N_STATE, :_N_STATE] = dm.A_d
    At[_N_STATE:, :_N_STATE] = T_s * dm.C
    At[_N_STATE:, _N_STATE:] = np.eye(_N_OUT)
    Bt = np.vstack([dm.B_du, T_s * dm.D])
    Bdt = np.zeros((_N_AUG, 4))
    Bdt[:_N_STATE, :2] = dm.B_dd
    Bdt[_N_STATE:, :2] = T_s * dm.D_d
    Bdt[_N_STATE:, 2:] = -T_s * np.eye(_N_OUT)
    ht = np.concatenate([dm.drift, T_s * dm.g0])
    return At, Bt, Bdt, ht


def _condense(dm: DiscreteModel, cfg: ControllerConfig) -> _CondensedQP:
    N = cfg.horizon
    At, Bt, Bdt, ht = _augment(dm, cfg)

    A_pows = [np.eye(_N_AUG)]
    for _ in range(N):
        A_pows.append(At @ A_pows[-1])
    G_sums = [np.zeros((_N_AUG, _N_AUG))]
    for k in range(N):
        G_sums.append(G_sums[-1] + A_pows[k])

    S = np.zeros((_N_AUG * N, _N_IN * N))
    for k in range(1, N + 1):
        for j in range(k):
            S[(k - 1) * _N_AUG:k * _N_AUG, j * _N_IN:(j + 1) * _N_IN] = \
                A_pows[k - 1 - j] @ Bt

    Qt = np.zeros(_N_AUG)
    Qt[_N_STATE:] = np.asarray(cfg.q_integrator, dtype=float)
    Qbar = np.tile(Qt, N)
    QS = Qbar[:, None] * S
    Rbar = np.tile(np.asarray(cfg.r_move, dtype=float), N)
    H = 2.0 * (S.T @ QS + np.diag(Rbar))
    H = 0.5 * (H + H.T)
    H_factor = cho_factor(H)

    u0 = dm.u0
    lb = np.asarray(cfg.u_min) - u0
    ub = np.asarray(cfg.u_max) - u0
    du = np.asarray(cfg.du_max, dtype=float)

    rows = []
    rhs = []
    nz = _N_IN * N
    for k in range(N):
        for i in range(_N_IN):
            e = np.zeros(nz)
            e[k * _N_IN + i] = 1.0
            rows.append(e)
            rhs.append(ub[i])
            rows.append(-e)
            rhs.append(-lb[i])
    # Rate rows for k = 0 reference the previous applied input; their rhs is
    # refreshed every step. They are kept contiguous at a known offset.
    rate0_start = len(rows)
    for i in range(_N_IN):
        e = np.zeros(nz)
        e[i] = 1.0
        rows.append(e)
        rhs.append(du[i])  # + z_prev[i], patched per step
        rows.append(-e)
        rhs.append(du[i])  # - z_prev[i], patched per step
    for k in range(1, N):
        for i in range(_N_IN):
            e = np.zeros(nz)
            e[k * _N_IN + i] = 1.0
            e[(k - 1) * _N_IN + i] = -1.0
            rows.append(e)
            rhs.append(du[i])
            rows.append(-e)
            rhs.append(du[i])
    G = np.vstack(rows)
    h_base = np.asarray(rhs, dtype=float)
    return _CondensedQP(S=S, QS=QS, H=H, H_factor=H_factor, G=G, h_base=h_base,
                        rate0_rows=slice(rate0_start, rate0_start + 2 * _N_IN),
                        A_pows=A_pows, G_sums=G_sums, At=At, Bt=Bt, Bdt=Bdt, ht=ht)


@dataclass
class StepResult:
    u: np.ndarray
    qp_iterations: int
    relinearized: bool
    held: bool
    x_i: np.ndarray


class MPCController:
    """Stateful tracking controller stepped once per sample period.

    Call ``step(t, state, reference, disturbance)`` at each control instant;
    it advances the error integrators using the measured heat rates over
    the elapsed interval, relinearizes when the period has elapsed or the
    reference changed, solves the condensed QP, and returns the applied
    input with solve diagnostics. Consecutive solver failures up to
    ``max_hold_steps`` hold the previous input; one more raises ``MPCError``.
    """

    def __init__(self, params: PlantParams, mode: str, ctrl: ControllerConfig,
                 state0, input0, dist0, reference0, t0: float = 0.0):
        self.plant_cfg = PlantConfig(params, mode)
        self.ctrl = ctrl
        self.u_prev = _as_input_array(input0).copy()
        self.d_prev = _as_dist_array(dist0).copy()
        self.r_prev = np.asarray(reference0, dtype=float).copy()
        self.x_i = np.zeros(_N_OUT)
        self._first_step = True
        self._hold_count = 0
        self._t_last_relin = t0
        self._setpoint_changed = False
        self.model: LinearModel = linearize(state0, input0, dist0, self.plant_cfg)
        self.discrete: DiscreteModel = discretize(self.model, ctrl.T_s)
        self._qp = _condense(self.discrete, ctrl)

    def _measured_output(self, state: np.ndarray, u: np.ndarray,
                         d: np.ndarray) -> np.ndarray:
        p = self.plant_cfg.params
        Q_A, _ = heat_rate(state[0], d[0], u[0], p.geometry_A, p.fluid)
        Q_B, _ = heat_rate(state[1], d[1], u[1], p.geometry_B, p.fluid)
        return np.array([Q_A, Q_B])

    def _relinearize(self, t: float, state: np.ndarray, dist: np.ndarray) -> bool:
        try:
            model = linearize(state, self.u_prev, dist, self.plant_cfg)
            discrete = discretize(model, self.ctrl.T_s)
            qp = _condense(discrete, self.ctrl)
        except (LinAlgError, DomainError, np.linalg.LinAlgError) as exc:
            log.warning("relinearization at t = %s failed (%s); keeping the old model",
                        t, exc)
            return False
        self.model = model
        self.discrete = discrete
        self._qp = qp
        self._t_last_relin = t
        return True

    def step(self, t: float, state, reference, disturbance) -> StepResult:
        x = _as_state_array(state)
        r = np.asarray(reference, dtype=float)
        d = _as_dist_array(disturbance)
        ctrl = self.ctrl

        # Integrator update covers the elapsed interval: the heat rates are
        # an algebraic function of the measured state, so the accumulated
        # error uses the true plant outputs under the inputs that were
        # applied, against the reference that was active. Integrating a
        # model estimate instead would let the integrators null model bias
        # rather than plant error.
        y_meas = self._measured_output(x, self.u_prev, self.d_prev)
        r_elapsed = r if self._first_step else self.r_prev
        self.x_i = self.x_i + ctrl.T_s * (y_meas - r_elapsed)
        self._first_step = False

        if not np.array_equal(r, self.r_prev):
            self._setpoint_changed = True
        relinearized = False
        if self._setpoint_changed or (t - self._t_last_relin) >= ctrl.relin_period:
            relinearized = self._relinearize(t, x, d)
            if relinearized:
                self._setpoint_changed = False

        qp = self._qp
        dm = self.discrete
        dx = x - dm.x0
        xt0 = np.concatenate([dx, self.x_i])
        dtilde = np.concatenate([d - dm.d0, r])
        w = qp.Bdt @ dtilde + qp.ht

        N = ctrl.horizon
        F = np.empty(_N_AUG * N)
        for k in range(1, N + 1):
            F[(k - 1) * _N_AUG:k * _N_AUG] = qp.A_pows[k] @ xt0 + qp.G_sums[k] @ w
        qlin = 2.0 * (qp.QS.T @ F)

        z_prev = self.u_prev - dm.u0
        h = qp.h_base.copy()
        du = np.asarray(ctrl.du_max, dtype=float)
        h[qp.rate0_rows] = np.ravel(np.column_stack([du + z_prev, du - z_prev]))

        lb = np.asarray(ctrl.u_min) - dm.u0
        ub = np.asarray(ctrl.u_max) - dm.u0
        if not propagate_move_intervals(lb, ub, du, z_prev, N):
            raise MPCError(f"rate and box constraints admit no input sequence at t = {t}")

        z0 = np.tile(z_prev, N)
        held = False
        qp_iters = 0
        try:
            res = solve_qp(qp.H_factor, qlin, qp.G, h, z0, H=qp.H)
            z_first = res.z[:_N_IN]
            qp_iters = res.n_iter
            self._hold_count = 0
        except QPError as exc:
            self._hold_count += 1
            if self._hold_count > ctrl.max_hold_steps:
                raise MPCError(
                    f"QP failed {self._hold_count} consecutive steps at t = {t}"
                ) from exc
            log.warning("QP failure at t = %s (%s); holding previous input", t, exc)
            z_first = z_prev
            held = True

        u = dm.u0 + z_first
        u = np.minimum(np.maximum(u, np.asarray(ctrl.u_min, dtype=float)),
                       np.asarray(ctrl.u_max, dtype=float))
        u = np.minimum(np.maximum(u, self.u_prev - du), self.u_prev + du)

        self.u_prev = u
        self.d_prev = d.copy()
        self.r_prev = r.copy()
        return StepResult(u=u, qp_iterations=qp_iters, relinearized=relinearized,
                          held=held, x_i=self.x_i.copy())
