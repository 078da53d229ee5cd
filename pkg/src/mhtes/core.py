"""Hydride thermodynamics, tube-side heat exchange, and the hydrogen line.

Pure scalar functions; no state. The compiled kernel mirrors these
expressions operation for operation, so any edit here must be replicated in
``_kernels.pyx`` to keep the two backends bit-identical.
"""

from __future__ import annotations

import logging
import math

from .params import FluidProperties, HydrideMaterial, HydrogenGas, HydrogenLine, ReactorGeometry

__all__ = [
    "R_GAS",
    "P_ATM",
    "MODE_B_TO_A",
    "MODE_A_TO_B",
    "DomainError",
    "chemical_potential",
    "equilibrium_pressure",
    "reaction_rate",
    "effectiveness",
    "heat_rate",
    "hydrogen_line_flow",
]

log = logging.getLogger(__name__)

R_GAS = 8.314  # J/(mol K), molar gas constant for the J/mol-H quantities
P_ATM = 101325.0  # Pa

MODE_B_TO_A = "b_to_a"  # compressor boosts B -> A (reactor A absorbs)
MODE_A_TO_B = "a_to_b"  # compressor boosts A -> B (reactor B absorbs)

# Weight fractions are clamped this far (relative to w_max) inside the open
# interval before evaluating the logarithmic composition term, giving each
# reaction-rate branch its finite limiting value at w = 0 and w = w_max.
_W_REL_FLOOR = 1e-9


class DomainError(ValueError):
    """An argument left the physical domain of the model."""


def chemical_potential(w: float, T: float, mat: HydrideMaterial, direction: str) -> float:
    """Chemical potential of hydrogen in the hydride, J/mol-H.

    Piecewise in ``w``: two solid-solution branches below ``w_alpha0`` and
    above ``w_beta0`` with a logarithmic composition term, and a plateau
    branch between them, linear in ``w``, whose level is set by the
    direction-specific reaction enthalpy and entropy.

    Parameters
    ----------
    w : float
        Absorbed-hydrogen weight fraction, strictly inside (0, w_max).
    T : float
        Temperature, K.
    mat : HydrideMaterial
    direction : {"abs", "des"}
        Selects ``dH0``/``dS0`` for the plateau branch.
    """
    if not 0.0 < w < mat.w_max:
        raise DomainError(f"w = {w} outside (0, {mat.w_max}) for {mat.name}")
    if T <= 0.0:
        raise DomainError(f"T = {T} must be positive")
    if direction == "abs":
        dH0, dS0 = mat.dH0_abs, mat.dS0_abs
    elif direction == "des":
        dH0, dS0 = mat.dH0_des, mat.dS0_des
    else:
        raise DomainError(f"direction must be 'abs' or 'des', got {direction!r}")

    if w < mat.w_alpha0:
        return (
            mat.mu_alpha0
            + 2.0 * R_GAS * mat.T_c * (1.0 - 2.0 * w / mat.w_max)
            + R_GAS * T * math.log(w / (mat.w_max - w))
        )
    if w > mat.w_beta0:
        return (
            mat.mu_beta0
            + 2.0 * R_GAS * mat.T_c * (1.0 - 2.0 * w / mat.w_max)
            + R_GAS * T * math.log(w / (mat.w_max - w))
        )
    return dH0 - T * dS0 + mat.A_phase * (w / mat.w_max - 0.5)


def equilibrium_pressure(w: float, T: float, mat: HydrideMaterial, direction: str) -> float:
    """Equilibrium hydrogen pressure over the bed, Pa."""
    return P_ATM * math.exp(chemical_potential(w, T, mat, direction) / (R_GAS * T))


def reaction_rate(T: float, P: float, w: float, mat: HydrideMaterial) -> float:
    """Reaction rate r = dw/dt, kg-H per kg-M per second.

    Positive when absorbing (P above the absorption equilibrium), negative
    when desorbing (P below the desorption equilibrium; the logarithm is
    negative there), and identically zero in the dead zone between the two
    equilibria. The equilibrium pressures are evaluated with ``w`` clamped
    just inside (0, w_max) so the boundary values w = 0 and w = w_max take
    each branch's finite limit.
    """
    if T <= 0.0:
        raise DomainError(f"T = {T} must be positive")
    if P <= 0.0:
        raise DomainError(f"P = {P} must be positive")
    if not 0.0 <= w <= mat.w_max:
        raise DomainError(f"w = {w} outside [0, {mat.w_max}] for {mat.name}")

    w_lo = _W_REL_FLOOR * mat.w_max
    w_hi = (1.0 - _W_REL_FLOOR) * mat.w_max
    w_eq = min(max(w, w_lo), w_hi)

    P_eq_abs = equilibrium_pressure(w_eq, T, mat, "abs")
    if P > P_eq_abs:
        return (
            mat.C_A
            * math.exp(-mat.E_A / (R_GAS * T))
            * math.log(P / P_eq_abs)
            * (mat.w_max - w)
        )
    P_eq_des = equilibrium_pressure(w_eq, T, mat, "des")
    if P < P_eq_des:
        return mat.C_A * math.exp(-mat.E_A / (R_GAS * T)) * math.log(P / P_eq_des) * w
    return 0.0


def effectiveness(mdot_total: float, geom: ReactorGeometry, fluid: FluidProperties) -> float:
    """Heat-exchanger effectiveness of one tube, dimensionless in (0, 1].

    The Reynolds number uses the full reactor flow against a single tube's
    diameter and surface area, a lumped convention calibrated against the
    plant's rated heat duty; the Nusselt number is Dittus-Boelter with a
    fixed Prandtl exponent of 0.4.
    """
    if mdot_total < 0.0:
        raise DomainError(f"mdot_total = {mdot_total} must be nonnegative")
    if mdot_total == 0.0:
        log.warning("effectiveness called with zero flow; returning limiting value 1.0")
        return 1.0
    Re = 4.0 * mdot_total / (math.pi * geom.tube_diameter * fluid.dynamic_viscosity)
    Nu = 0.023 * Re**0.8 * fluid.prandtl**0.4
    h = Nu * fluid.thermal_conductivity / geom.tube_diameter
    ntu = h * geom.tube_surface_area / (mdot_total * fluid.specific_heat)
    return 1.0 - math.exp(-ntu)


def heat_rate(
    T_hyd: float,
    T_wg_in: float,
    mdot_total: float,
    geom: ReactorGeometry,
    fluid: FluidProperties,
) -> tuple[float, float]:
    """Heat transferred from the bed to the circulating fluid.

    Returns
    -------
    (Q, T_wg_out) : tuple of float
        Q in W, positive when the hydride heats the fluid; outlet
        temperature in K, always between inlet and bed temperatures.
    """
    eps = effectiveness(mdot_total, geom, fluid)
    T_out = T_wg_in + eps * (T_hyd - T_wg_in)
    Q = mdot_total * fluid.specific_heat * (T_out - T_wg_in)
    return Q, T_out


def _regularized_sqrt_flow(delta: float, a: float, p_reg: float) -> float:
    """sign(delta)*a*sqrt(|delta|), blended to an odd cubic inside |delta| < p_reg.

    The cubic c1*delta + c3*delta^3 matches the square-root law's value and
    slope at the band edge, removing the infinite slope at delta = 0.
    """
    ad = abs(delta)
    if ad >= p_reg:
        return math.copysign(a * math.sqrt(ad), delta)
    c1 = 1.25 * a / math.sqrt(p_reg)
    c3 = -0.25 * a / (p_reg * p_reg * math.sqrt(p_reg))
    return c1 * delta + c3 * delta * delta * delta


def hydrogen_line_flow(
    P_A: float,
    P_B: float,
    dP_comp: float,
    mode: str,
    T_upstream: float,
    P_upstream: float,
    gas: HydrogenGas,
    line: HydrogenLine,
) -> float:
    """Hydrogen mass flow through the inter-reactor line, kg/s INTO reactor A.

    The compressor boosts the mode's source reactor, so the driving
    difference is ``P_B + dP_comp - P_A`` toward A in mode ``b_to_a`` and
    ``P_A + dP_comp - P_B`` toward B in mode ``a_to_b``. Negative driving
    differences give reverse flow. Gas density comes from the mode's source
    reactor state by the ideal gas law, keeping the law odd in the driving
    difference.
    """
    if P_A <= 0.0 or P_B <= 0.0:
        raise DomainError(f"pressures must be positive, got P_A={P_A}, P_B={P_B}")
    rho = P_upstream / (gas.gas_constant * T_upstream)
    a = line.cross_section * math.sqrt(2.0 * rho / line.loss_coefficient)
    if mode == MODE_B_TO_A:
        delta = P_B + dP_comp - P_A
        return _regularized_sqrt_flow(delta, a, line.regularization_pressure)
    if mode == MODE_A_TO_B:
        delta = P_A + dP_comp - P_B
        return -_regularized_sqrt_flow(delta, a, line.regularization_pressure)
    raise DomainError(f"mode must be '{MODE_B_TO_A}' or '{MODE_A_TO_B}', got {mode!r}")
