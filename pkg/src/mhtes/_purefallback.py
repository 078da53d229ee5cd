"""Pure-Python twin of the compiled right-hand-side kernel.

Every expression here is written in the same operation order as
``_kernels.pyx`` and as the reference functions in ``core``; all three must
produce bit-identical doubles. Packed slots are hoisted into Python floats
before use so arithmetic goes through CPython's libm bindings, matching the
compiled kernel's calls. No domain checking happens at this level: the
integrator's Newton iterations may probe slightly unphysical states and the
expressions are left to extend smoothly (or go non-finite, which the step
controller treats as a rejected step).
"""

from __future__ import annotations

import math

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

R_GAS = 8.314
P_ATM = 101325.0

COMPILED = False


def _peq(pk, off: int, w: float, T: float, dH0: float, dS0: float) -> float:
    w_max = float(pk[off + P_W_MAX])
    if w < pk[off + P_W_A0]:
        mu = (
            float(pk[off + P_MU_A0])
            + float(pk[off + P_TWO_R_TC]) * (1.0 - 2.0 * w / w_max)
            + R_GAS * T * math.log(w / (w_max - w))
        )
    elif w > pk[off + P_W_B0]:
        mu = (
            float(pk[off + P_MU_B0])
            + float(pk[off + P_TWO_R_TC]) * (1.0 - 2.0 * w / w_max)
            + R_GAS * T * math.log(w / (w_max - w))
        )
    else:
        mu = dH0 - T * dS0 + float(pk[off + P_A_PHASE]) * (w / w_max - 0.5)
    return P_ATM * math.exp(mu / (R_GAS * T))


def _reg_flow(delta: float, a: float, p_reg: float) -> float:
    ad = abs(delta)
    if ad >= p_reg:
        return math.copysign(a * math.sqrt(ad), delta)
    c1 = 1.25 * a / math.sqrt(p_reg)
    c3 = -0.25 * a / (p_reg * p_reg * math.sqrt(p_reg))
    return c1 * delta + c3 * delta * delta * delta


def _reactor(pk, off: int, T: float, P: float, w: float, T_partner: float,
             mdot_wg: float, T_in: float, m_in_cv: float):
    R_H = float(pk[G_R_H])
    cp_H = float(pk[G_CP_H])
    c_wg = float(pk[G_C_WG])

    w_max = float(pk[off + P_W_MAX])
    w_lo = 1e-9 * w_max
    w_hi = (1.0 - 1e-9) * w_max
    w_eq = w if w > w_lo else w_lo
    w_eq = w_eq if w_eq < w_hi else w_hi

    C_A = float(pk[off + P_C_A])
    E_A = float(pk[off + P_E_A])
    P_eq_abs = _peq(pk, off, w_eq, T, float(pk[off + P_DH0_ABS]), float(pk[off + P_DS0_ABS]))
    if P > P_eq_abs:
        r = C_A * math.exp(-E_A / (R_GAS * T)) * math.log(P / P_eq_abs) * (w_max - w)
    else:
        P_eq_des = _peq(pk, off, w_eq, T, float(pk[off + P_DH0_DES]), float(pk[off + P_DS0_DES]))
        if P < P_eq_des:
            r = C_A * math.exp(-E_A / (R_GAS * T)) * math.log(P / P_eq_des) * w
        else:
            r = 0.0

    if mdot_wg > 0.0:
        D_tube = float(pk[off + P_D_TUBE])
        Re = 4.0 * mdot_wg / (math.pi * D_tube * float(pk[G_MU_WG]))
        Nu = 0.023 * Re**0.8 * float(pk[G_PR_WG]) ** 0.4
        hh = Nu * float(pk[G_K_WG]) / D_tube
        ntu = hh * float(pk[off + P_A_S]) / (mdot_wg * c_wg)
        eps = 1.0 - math.exp(-ntu)
        fluid = eps * (mdot_wg * float(pk[G_INV_NTUBES])) * c_wg * (T_in - T)
    else:
        fluid = 0.0

    if m_in_cv > 0.0:
        adv = m_in_cv * cp_H * (T_partner - T)
    else:
        adv = 0.0

    dh = float(pk[off + P_DH_ABS]) if r > 0.0 else float(pk[off + P_DH_DES])
    rm = r * float(pk[off + P_M_HYD])
    phiV = float(pk[off + P_PHIV])
    m_H = phiV * P / (R_H * T)
    M = float(pk[off + P_MC_HYD]) + m_H * cp_H
    dT = (rm * dh + fluid + adv) / M
    dm_gas = m_in_cv - rm
    dP = R_H * T / phiV * dm_gas + P / T * dT
    return dT, dP, r


def rhs(x, u, d, pk, out) -> None:
    """Time derivative of [T_A, T_B, P_A, P_B, w_A, w_B], written into out."""
    T_A = float(x[0])
    T_B = float(x[1])
    P_A = float(x[2])
    P_B = float(x[3])
    w_A = float(x[4])
    w_B = float(x[5])
    mdot_A = float(u[0])
    mdot_B = float(u[1])
    dP_comp = float(u[2])
    T_in_A = float(d[0])
    T_in_B = float(d[1])

    R_H = float(pk[G_R_H])
    A_c = float(pk[G_AC])
    K_loss = float(pk[G_KLOSS])
    p_reg = float(pk[G_PREG])
    inv_n = float(pk[G_INV_NTUBES])

    if pk[G_MODE_SIGN] > 0.0:
        rho = P_B / (R_H * T_B)
        a = A_c * math.sqrt(2.0 * rho / K_loss)
        delta = P_B + dP_comp - P_A
        flow_A = _reg_flow(delta, a, p_reg)
    else:
        rho = P_A / (R_H * T_A)
        a = A_c * math.sqrt(2.0 * rho / K_loss)
        delta = P_A + dP_comp - P_B
        flow_A = -_reg_flow(delta, a, p_reg)
    m_in_A = flow_A * inv_n
    m_in_B = -m_in_A

    dT_A, dP_A, r_A = _reactor(pk, R_A, T_A, P_A, w_A, T_B, mdot_A, T_in_A, m_in_A)
    dT_B, dP_B, r_B = _reactor(pk, R_B, T_B, P_B, w_B, T_A, mdot_B, T_in_B, m_in_B)

    out[0] = dT_A
    out[1] = dT_B
    out[2] = dP_A
    out[3] = dP_B
    out[4] = r_A
    out[5] = r_B
