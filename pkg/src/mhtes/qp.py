"""Dense strictly convex quadratic programming by a primal active-set method.

Solves  min_z 0.5 z'Hz + q'z  subject to  G z <= h,  starting from a
feasible point. The Hessian enters as a precomputed Cholesky factorization
(scipy ``cho_factor``) because the calling controller reuses one H across
many solves; each working-set subproblem is handled through the Schur
complement G_W H^-1 G_W', so only small systems are factored per iteration.

The working set starts empty and grows one blocking constraint at a time,
which keeps its rows linearly independent; ties for the blocking constraint
and the dropped constraint both break toward the lowest row index, making
the iteration path, and therefore the result bits, deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

__all__ = ["QPError", "QPResult", "solve_qp"]


class QPError(RuntimeError):
    """Solver failed; carries the last iterate and KKT residuals."""

    def __init__(self, message: str, z: np.ndarray, primal_residual: float,
                 stationarity_residual: float, n_iter: int):
        self.z = np.array(z, copy=True)
        self.primal_residual = primal_residual
        self.stationarity_residual = stationarity_residual
        self.n_iter = n_iter
        super().__init__(
            f"{message} (iterations {n_iter}, primal residual {primal_residual:.3e}, "
            f"stationarity residual {stationarity_residual:.3e})"
        )


@dataclass
class QPResult:
    z: np.ndarray
    lam: np.ndarray
    active: tuple
    n_iter: int


def solve_qp(H_factor, q: np.ndarray, G: np.ndarray, h: np.ndarray,
             z0: np.ndarray, *, H: np.ndarray, tol: float = 1e-8,
             max_iter: int = 500) -> QPResult:
    """Minimize 0.5 z'Hz + q'z subject to G z <= h from feasible z0.

    Parameters
    ----------
    H_factor : (c, lower) pair from ``scipy.linalg.cho_factor``.
    H : ndarray
        The Hessian itself, used for gradients and residual checks.
    z0 : ndarray
        Feasible start; violation beyond ``tol`` (scaled) raises QPError.

    Returns
    -------
    QPResult with the minimizer, the full-length multiplier vector, the
    final active set, and the iteration count.
    """
    nc = G.shape[0]
    z = np.array(z0, dtype=float, copy=True)
    scale = 1.0 + (float(np.max(np.abs(h))) if nc else 0.0)
    if nc:
        worst = float(np.max(G @ z - h))
        if worst > tol * scale:
            raise QPError("infeasible starting point", z, worst, float("nan"), 0)

    work: list[int] = []
    lam_w = np.zeros(0)
    q_scale = float(np.max(np.abs(q))) if q.size else 0.0
    for it in range(1, max_iter + 1):
        Hz = H @ z
        g = Hz + q
        # The stationarity residual Hz + q + G'lam is a sum of cancelling
        # terms, so its noise floor scales with the largest term, not with
        # the (near-zero) gradient at a candidate optimum.
        grad_scale = 1.0 + max(q_scale, float(np.max(np.abs(Hz))))
        p_u = -cho_solve(H_factor, g)
        if work:
            GW = G[work]
            X = cho_solve(H_factor, GW.T)
            S = GW @ X
            lam_w = np.linalg.solve(S, GW @ p_u)
            p = p_u - X @ lam_w
        else:
            lam_w = np.zeros(0)
            p = p_u

        if float(np.max(np.abs(p))) <= tol * (1.0 + float(np.max(np.abs(z)))):
            negative = [k for k in range(len(work)) if lam_w[k] < -tol * grad_scale]
            if negative:
                j = min(negative, key=lambda k: work[k])
                work.pop(j)
                continue
            lam_full = np.zeros(nc)
            for k, i in enumerate(work):
                lam_full[i] = max(float(lam_w[k]), 0.0)
            primal = float(np.max(G @ z - h)) if nc else 0.0
            corr = G.T @ lam_full if nc else np.zeros_like(z)
            stat = float(np.max(np.abs(Hz + q + corr)))
            stat_scale = grad_scale + float(np.max(np.abs(corr)))
            if primal > 10.0 * tol * scale or stat > 10.0 * tol * stat_scale:
                raise QPError("KKT residuals out of tolerance at candidate optimum",
                              z, primal, stat, it)
            return QPResult(z=z, lam=lam_full, active=tuple(work), n_iter=it)

        alpha = 1.0
        blocker = -1
        if nc:
            Gp = G @ p
            slack = h - G @ z
            in_work = set(work)
            for i in range(nc):
                if i in in_work:
                    continue
                if Gp[i] > tol * scale:
                    a_i = slack[i] / Gp[i]
                    if a_i < alpha - 1e-15:
                        alpha = max(a_i, 0.0)
                        blocker = i
        z = z + alpha * p
        if blocker >= 0:
            work.append(blocker)
            work.sort()

    primal = float(np.max(G @ z - h)) if nc else 0.0
    stat = float(np.max(np.abs(H @ z + q)))
    raise QPError("iteration limit reached", z, primal, stat, max_iter)
