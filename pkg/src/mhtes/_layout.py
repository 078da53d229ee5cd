"""Slot layout of the packed plant-constant vector shared by both backends.

The right-hand-side kernels (compiled and pure) receive every plant
parameter as one contiguous float64 vector so the two implementations can
be textual twins. Index constants here are the single source of truth; the
compiled kernel hardcodes the same numbers and a cross-backend test pins
them together.

State order everywhere: [T_A, T_B, P_A, P_B, w_A, w_B].
Input order: [mdot_wg_A, mdot_wg_B, dP_comp]. Disturbances: [T_in_A, T_in_B].
"""

# Global slots.
G_R_H = 0  # hydrogen specific gas constant, J/(kg K)
G_CP_H = 1  # hydrogen specific heat, J/(kg K)
G_C_WG = 2  # water-glycol specific heat, J/(kg K)
G_AC = 3  # line cross section, m^2
G_KLOSS = 4  # line loss coefficient
G_PREG = 5  # line regularization band, Pa
G_MODE_SIGN = 6  # +1 when the compressor boosts B toward A, -1 the other way
G_INV_NTUBES = 7  # 1 / n_tubes
G_MU_WG = 8  # water-glycol dynamic viscosity, Pa s
G_PR_WG = 9  # water-glycol Prandtl number
G_K_WG = 10  # water-glycol thermal conductivity, W/(m K)

# Per-reactor block: A starts at R_A, B at R_B.
R_A = 11
R_B = 31
NPR = 20

P_M_HYD = 0  # hydride mass in one control volume, kg
P_MC_HYD = 1  # hydride mass times hydride specific heat, J/K
P_PHIV = 2  # gas void volume of one control volume, m^3
P_DH_ABS = 3  # |reaction enthalpy| released on absorption, J/kg-H
P_DH_DES = 4  # |reaction enthalpy| consumed on desorption, J/kg-H
P_W_MAX = 5
P_C_A = 6  # kinetic prefactor, 1/s
P_E_A = 7  # activation energy, J/mol
P_DH0_ABS = 8  # plateau enthalpy, absorption, J/mol (negative)
P_DS0_ABS = 9  # plateau entropy, absorption, J/(mol K) (negative)
P_DH0_DES = 10
P_DS0_DES = 11
P_A_PHASE = 12  # plateau slope parameter, J/mol
P_D_TUBE = 13  # tube diameter, m
P_A_S = 14  # one tube's surface area, m^2
P_MU_A0 = 15  # solid-solution reference potential below w_alpha0, J/mol
P_MU_B0 = 16  # solid-solution reference potential above w_beta0, J/mol
P_W_A0 = 17
P_W_B0 = 18
P_TWO_R_TC = 19  # 2 * R * T_c, J/mol

NPACK = R_B + NPR
