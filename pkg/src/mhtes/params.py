"""Parameter types and the TOML parameter-file loader.

All quantities are SI. Every value in a parameter file is written as an
inline table ``{value = ..., source = "..."}`` so that the provenance of
each constant travels with it; the loader validates invariants and reports
errors with full dotted field paths.
"""

from __future__ import annotations

import math

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

__all__ = [
    "ConfigError",
    "HydrideMaterial",
    "FluidProperties",
    "HydrogenGas",
    "ReactorGeometry",
    "HydrogenLine",
    "PlantParams",
    "load_params",
    "default_params_path",
]


class ConfigError(Exception):
    """Malformed or inconsistent configuration.

    Parameters
    ----------
    path : str
        Dotted path of the offending field (e.g. ``material_A.w_max``).
    message : str
        Human-readable description of the problem.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class HydrideMaterial:
    """Thermodynamic and kinetic constants of one hydride alloy.

    Units: density kg/m^3; specific_heat J/(kg K); dH_abs/dH_des J per kg of
    hydrogen reacted; w_max, w_alpha0, w_beta0 kg-H/kg-M; C_A 1/s; E_A,
    dH0_*, mu_* J/mol-H; dS0_* J/(mol-H K); T_c K; A_phase J/mol-H;
    porosity dimensionless.
    """

    name: str
    density: float
    specific_heat: float
    dH_abs: float
    dH_des: float
    w_max: float
    C_A: float
    E_A: float
    dH0_abs: float
    dS0_abs: float
    dH0_des: float
    dS0_des: float
    mu_alpha0: float
    mu_beta0: float
    w_alpha0: float
    w_beta0: float
    T_c: float
    A_phase: float
    porosity: float

    def validate(self, path: str) -> None:
        if not (0.0 < self.w_alpha0 < self.w_beta0 < self.w_max):
            raise ConfigError(
                f"{path}.w_alpha0",
                f"requires 0 < w_alpha0 < w_beta0 < w_max, got "
                f"({self.w_alpha0}, {self.w_beta0}, {self.w_max})",
            )
        if not (0.0 < self.porosity < 1.0):
            raise ConfigError(f"{path}.porosity", f"must be in (0, 1), got {self.porosity}")
        for name in ("density", "specific_heat", "C_A", "E_A", "T_c"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{path}.{name}", f"must be > 0, got {getattr(self, name)}")
        # Absorption must release heat in the energy balance: r > 0 enters as
        # +r*m_hyd*dH_abs, so dH_abs (per kg H2) must be positive.
        if self.dH_abs <= 0.0 or self.dH_des <= 0.0:
            raise ConfigError(f"{path}.dH_abs", "reaction enthalpies must be positive J/kg-H")


@dataclass(frozen=True)
class FluidProperties:
    """Circulating-fluid properties, constant (no temperature dependence)."""

    specific_heat: float
    thermal_conductivity: float
    dynamic_viscosity: float
    prandtl: float

    def validate(self, path: str) -> None:
        for name in ("specific_heat", "thermal_conductivity", "dynamic_viscosity", "prandtl"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{path}.{name}", f"must be > 0, got {getattr(self, name)}")
        implied = self.specific_heat * self.dynamic_viscosity / self.thermal_conductivity
        if abs(implied - self.prandtl) > 1e-9 * self.prandtl:
            raise ConfigError(
                f"{path}.prandtl",
                f"inconsistent with c*mu/k = {implied!r} (declared {self.prandtl!r})",
            )


@dataclass(frozen=True)
class HydrogenGas:
    """Hydrogen gas constants (mass basis)."""

    gas_constant: float
    specific_heat: float

    def validate(self, path: str) -> None:
        if self.gas_constant <= 0.0:
            raise ConfigError(f"{path}.gas_constant", "must be > 0")
        if self.specific_heat <= 0.0:
            raise ConfigError(f"{path}.specific_heat", "must be > 0")


@dataclass(frozen=True)
class ReactorGeometry:
    """Shell-and-tube geometry. Derived quantities are per control volume
    (one tube plus its shell annulus); the reactor holds ``n_tubes`` identical
    control volumes in parallel."""

    tube_diameter: float
    shell_diameter: float
    n_tubes: int
    length: float

    def validate(self, path: str) -> None:
        if self.shell_diameter <= self.tube_diameter:
            raise ConfigError(
                f"{path}.shell_diameter",
                f"must exceed tube_diameter ({self.tube_diameter})",
            )
        if self.tube_diameter <= 0.0 or self.length <= 0.0 or self.n_tubes < 1:
            raise ConfigError(f"{path}.tube_diameter", "geometry primitives must be positive")

    @property
    def shell_volume(self) -> float:
        """Annular shell volume around one tube, m^3."""
        return math.pi / 4.0 * (self.shell_diameter**2 - self.tube_diameter**2) * self.length

    @property
    def tube_surface_area(self) -> float:
        """Heat-transfer surface of one tube, m^2."""
        return math.pi * self.tube_diameter * self.length

    @property
    def tube_cross_section(self) -> float:
        """Flow cross-section of one tube, m^2."""
        return math.pi / 4.0 * self.tube_diameter**2

    def hydride_mass(self, material: HydrideMaterial) -> float:
        """Hydride mass in one control volume, kg."""
        return (1.0 - material.porosity) * self.shell_volume * material.density


@dataclass(frozen=True)
class HydrogenLine:
    """Inter-reactor hydrogen line: flow area, loss, and the half-width of the
    regularized band around zero driving pressure difference."""

    cross_section: float
    loss_coefficient: float
    regularization_pressure: float

    def validate(self, path: str) -> None:
        if self.cross_section <= 0.0:
            raise ConfigError(f"{path}.cross_section", "must be > 0")
        if self.loss_coefficient <= 0.0:
            raise ConfigError(f"{path}.loss_coefficient", "must be > 0")
        if self.regularization_pressure <= 0.0:
            raise ConfigError(f"{path}.regularization_pressure", "must be > 0")


@dataclass(frozen=True)
class PlantParams:
    """Complete parameter bundle for the two-reactor plant."""

    material_A: HydrideMaterial
    material_B: HydrideMaterial
    geometry_A: ReactorGeometry
    geometry_B: ReactorGeometry
    fluid: FluidProperties
    gas: HydrogenGas
    line: HydrogenLine
    sources: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def validate(self) -> None:
        self.material_A.validate("material_A")
        self.material_B.validate("material_B")
        self.geometry_A.validate("geometry_A")
        self.geometry_B.validate("geometry_B")
        self.fluid.validate("fluid")
        self.gas.validate("gas")
        self.line.validate("line")
        if self.geometry_A.n_tubes != self.geometry_B.n_tubes:
            raise ConfigError(
                "geometry_B.n_tubes",
                "both reactors must have the same tube count (the line flow is "
                "split per control volume symmetrically)",
            )


def _require_table(tbl: dict[str, Any], path: str) -> dict[str, Any]:
    if not isinstance(tbl, dict):
        raise ConfigError(path, f"expected a table, got {type(tbl).__name__}")
    return tbl


def _take(tbl: dict[str, Any], section: str, key: str, sources: dict[str, str], *, kind=float):
    path = f"{section}.{key}"
    if key not in tbl:
        raise ConfigError(path, "missing required field")
    entry = tbl[key]
    if not isinstance(entry, dict) or "value" not in entry:
        raise ConfigError(path, 'expected an inline table {value = ..., source = "..."}')
    value = entry["value"]
    source = entry.get("source", "")
    if not isinstance(source, str) or not source:
        raise ConfigError(path, "missing source annotation string")
    sources[path] = source
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    raise AssertionError(kind)


_MATERIAL_FIELDS = [
    "density", "specific_heat", "dH_abs", "dH_des", "w_max", "C_A", "E_A",
    "dH0_abs", "dS0_abs", "dH0_des", "dS0_des", "mu_alpha0", "mu_beta0",
    "w_alpha0", "w_beta0", "T_c", "A_phase", "porosity",
]


def _load_material(doc: dict[str, Any], section: str, sources: dict[str, str]) -> HydrideMaterial:
    tbl = _require_table(doc.get(section, None), section)
    name = tbl.get("name", section)
    if not isinstance(name, str):
        raise ConfigError(f"{section}.name", "must be a string")
    values = {f: _take(tbl, section, f, sources) for f in _MATERIAL_FIELDS}
    return HydrideMaterial(name=name, **values)


def _load_geometry(doc: dict[str, Any], section: str, sources: dict[str, str]) -> ReactorGeometry:
    tbl = _require_table(doc.get(section, None), section)
    return ReactorGeometry(
        tube_diameter=_take(tbl, section, "tube_diameter", sources),
        shell_diameter=_take(tbl, section, "shell_diameter", sources),
        n_tubes=_take(tbl, section, "n_tubes", sources, kind=int),
        length=_take(tbl, section, "length", sources),
    )


def load_params(path: str | Path) -> PlantParams:
    """Load and validate a parameter file.

    Raises
    ------
    ConfigError
        On a missing file, malformed TOML, missing fields, missing source
        annotations, or violated invariants; the exception carries the dotted
        field path.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "parameter file not found")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML parse error: {exc}") from exc

    sources: dict[str, str] = {}
    material_A = _load_material(doc, "material_A", sources)
    material_B = _load_material(doc, "material_B", sources)
    geometry_A = _load_geometry(doc, "geometry_A", sources)
    geometry_B = _load_geometry(doc, "geometry_B", sources)

    fl = _require_table(doc.get("fluid", None), "fluid")
    fluid = FluidProperties(
        specific_heat=_take(fl, "fluid", "specific_heat", sources),
        thermal_conductivity=_take(fl, "fluid", "thermal_conductivity", sources),
        dynamic_viscosity=_take(fl, "fluid", "dynamic_viscosity", sources),
        prandtl=_take(fl, "fluid", "prandtl", sources),
    )
    gs = _require_table(doc.get("gas", None), "gas")
    gas = HydrogenGas(
        gas_constant=_take(gs, "gas", "gas_constant", sources),
        specific_heat=_take(gs, "gas", "specific_heat", sources),
    )
    ln = _require_table(doc.get("line", None), "line")
    line = HydrogenLine(
        cross_section=_take(ln, "line", "cross_section", sources),
        loss_coefficient=_take(ln, "line", "loss_coefficient", sources),
        regularization_pressure=_take(ln, "line", "regularization_pressure", sources),
    )

    params = PlantParams(
        material_A=material_A,
        material_B=material_B,
        geometry_A=geometry_A,
        geometry_B=geometry_B,
        fluid=fluid,
        gas=gas,
        line=line,
        sources=sources,
    )
    params.validate()
    return params


def default_params_path() -> Path:
    """Path of the parameter file shipped with the package."""
    return Path(resources.files("mhtes").joinpath("data/params.toml"))  # type: ignore[arg-type]
