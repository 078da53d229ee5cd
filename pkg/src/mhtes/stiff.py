"""Adaptive TR-BDF2 integrator for stiff initial value problems.

One-step, L-stable, second order, with an embedded third-order error
estimate. Both implicit stages share the same iteration matrix
``I - (gamma*h/2) J``, so one LU factorization serves the whole step; the
Jacobian is finite-differenced and reused across steps until Newton
struggles or the step size moves far from the factorization's.

The integrator lands exactly on caller-supplied times (``must_hit``); it
never interpolates, so sampled values are true step endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = ["IntegrationError", "StepStats", "trbdf2"]

_GAMMA = 2.0 - math.sqrt(2.0)
# BDF2 stage: y1 = CA*y_gamma - CB*y0 + ALPHA*h*f(t+h, y1); ALPHA also equals
# gamma/2, so both stages share the iteration matrix I - ALPHA*h*J.
_CA = 1.0 / (_GAMMA * (2.0 - _GAMMA))
_CB = (1.0 - _GAMMA) ** 2 / (_GAMMA * (2.0 - _GAMMA))
_ALPHA = (1.0 - _GAMMA) / (2.0 - _GAMMA)
# Third-order quadrature weights on nodes {0, gamma, 1} for the embedded
# error estimate.
_W0 = 0.5 - 1.0 / (6.0 * _GAMMA)
_W1 = 1.0 / (6.0 * _GAMMA * (1.0 - _GAMMA))
_W2 = (2.0 - 3.0 * _GAMMA) / (6.0 * (1.0 - _GAMMA))

_MAX_NEWTON = 8
_NEWTON_TOL = 0.03


class IntegrationError(RuntimeError):
    """Integration failed; carries the time and state at failure."""

    def __init__(self, message: str, t: float, y: np.ndarray):
        self.t = t
        self.y = np.array(y, copy=True)
        super().__init__(f"{message} at t = {t} with state {np.array2string(self.y, precision=6)}")


@dataclass
class StepStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    n_jac: int = 0
    n_lu: int = 0
    n_restarts: int = 0


@dataclass
class _Workspace:
    jac: np.ndarray | None = None
    jac_t: float = math.nan
    lu: tuple | None = None
    lu_d: float = math.nan
    stale: bool = True
    stats: StepStats = field(default_factory=StepStats)


def _fd_jacobian(f, t, y, f0, stats: StepStats, typ: np.ndarray) -> np.ndarray:
    n = y.size
    J = np.empty((n, n))
    sqrt_eps = math.sqrt(np.finfo(float).eps)
    for j in range(n):
        h = sqrt_eps * max(abs(y[j]), typ[j])
        yp = y.copy()
        yp[j] += h
        J[:, j] = (f(t, yp) - f0) / h
    stats.n_rhs += n
    stats.n_jac += 1
    return J


def _newton(f, t, rhs_coeff, const, y_guess, ws: _Workspace, wt: np.ndarray):
    """Solve y = const + rhs_coeff*f(t, y) by modified Newton.

    Returns (y, f_at_y) or raises _NewtonFailure. ``wt`` are the error
    weights used for the convergence norm.
    """
    y = y_guess.copy()
    prev_norm = math.inf
    for _ in range(_MAX_NEWTON):
        fy = f(t, y)
        ws.stats.n_rhs += 1
        resid = y - const - rhs_coeff * fy
        delta = lu_solve(ws.lu, resid)
        y -= delta
        norm = math.sqrt(float(np.mean((delta / wt) ** 2)))
        if norm < _NEWTON_TOL:
            fy = f(t, y)
            ws.stats.n_rhs += 1
            return y, fy
        if norm > 2.0 * prev_norm or not math.isfinite(norm):
            break
        prev_norm = norm
    raise _NewtonFailure


class _NewtonFailure(Exception):
    pass


def trbdf2(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t1: float,
    *,
    rtol: float = 1e-8,
    atol: float | np.ndarray = 1e-10,
    first_step: float | None = None,
    max_step: float = math.inf,
    must_hit: Sequence[float] = (),
    on_accept: Callable[[float, np.ndarray, float, np.ndarray], bool | None] | None = None,
) -> tuple[np.ndarray, StepStats]:
    """Integrate ``dy/dt = f(t, y)`` from ``t0`` to ``t1``.

    Parameters
    ----------
    must_hit : sequence of float
        Strictly increasing times in (t0, t1]; the integrator shortens steps
        to land on each exactly.
    on_accept : callable, optional
        Called after every accepted step with (t_prev, y_prev, t_new, y_new).
        Returning True requests a cautious restart: the Jacobian is flushed
        and the next step size reduced (used by the caller to re-anchor after
        a reaction-branch change detected at step granularity).

    Returns
    -------
    (y_final, stats)
    """
    y = np.asarray(y0, dtype=float).copy()
    n = y.size
    atol_arr = np.broadcast_to(np.asarray(atol, dtype=float), (n,)).copy()
    typ = np.maximum(atol_arr / rtol, 1e-30)
    hits = [float(v) for v in must_hit]
    for a, b in zip(hits, hits[1:]):
        if b <= a:
            raise ValueError("must_hit times must be strictly increasing")
    if any(v <= t0 or v > t1 for v in hits):
        raise ValueError("must_hit times must lie in (t0, t1]")
    hit_idx = 0

    ws = _Workspace()
    stats = ws.stats
    t = t0
    f0 = f(t, y)
    stats.n_rhs += 1
    if not np.all(np.isfinite(f0)):
        raise IntegrationError("non-finite derivative at the initial state", t, y)

    span = t1 - t0
    if first_step is None:
        scale = math.sqrt(float(np.mean((f0 * span / (atol_arr + rtol * np.abs(y))) ** 2)))
        h = span if scale == 0.0 else min(span, max(span * 1e-6, 0.01 * span / scale))
    else:
        h = first_step
    h = min(h, max_step, span)
    h_min = max(span, abs(t0), 1.0) * 1e-13

    while t < t1:
        if h < h_min:
            raise IntegrationError(f"step size underflow (h = {h})", t, y)
        target = None
        h_eff = min(h, max_step, t1 - t)
        if hit_idx < len(hits):
            gap = hits[hit_idx] - t
            if h_eff >= gap * (1.0 - 1e-12):
                h_eff = gap
                target = hits[hit_idx]
        if t + h_eff >= t1:
            target = t1 if target is None else target

        d = _GAMMA * h_eff / 2.0
        if ws.jac is None:
            ws.jac = _fd_jacobian(f, t, y, f0, stats, typ)
            ws.lu = None
        if ws.lu is None or ws.lu_d != d:
            ws.lu = lu_factor(np.eye(n) - d * ws.jac)
            ws.lu_d = d
            stats.n_lu += 1

        wt = atol_arr + rtol * np.abs(y)
        try:
            tg = t + _GAMMA * h_eff
            yg_guess = y + _GAMMA * h_eff * f0
            yg, fg = _newton(f, tg, d, y + d * f0, yg_guess, ws, wt)
            tn = t + h_eff if target is None else target
            y1_guess = y + (yg - y) / _GAMMA
            y1, f1 = _newton(f, tn, _ALPHA * h_eff, _CA * yg - _CB * y, y1_guess, ws, wt)
        except _NewtonFailure:
            if ws.stale:
                ws.jac = None  # refresh at current point before shrinking further
                ws.stale = False
            else:
                h *= 0.5
                stats.n_rejected += 1
            continue

        est_raw = h_eff * (_W0 * f0 + _W1 * fg + _W2 * f1) - (y1 - y)
        est = lu_solve(ws.lu, est_raw)
        wt1 = atol_arr + rtol * np.maximum(np.abs(y), np.abs(y1))
        err = math.sqrt(float(np.mean((est / wt1) ** 2)))
        if not math.isfinite(err):
            h *= 0.5
            stats.n_rejected += 1
            ws.jac = None
            continue

        if err <= 1.0:
            t_prev, y_prev = t, y.copy()
            t = t + h_eff if target is None else target
            y = y1
            f0 = f1
            stats.n_steps += 1
            ws.stale = True
            if hit_idx < len(hits) and target == hits[hit_idx]:
                hit_idx += 1
            restart = on_accept(t_prev, y_prev, t, y) if on_accept is not None else None
            factor = min(5.0, max(0.2, 0.9 * max(err, 1e-10) ** (-1.0 / 3.0)))
            h = h_eff * factor
            if restart:
                ws.jac = None
                ws.lu = None
                h = min(h, max(h_eff * 0.2, h_min * 10.0))
                stats.n_restarts += 1
        else:
            stats.n_rejected += 1
            h = h_eff * min(0.9, max(0.2, 0.9 * err ** (-1.0 / 3.0)))

    return y, stats
