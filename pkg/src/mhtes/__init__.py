"""Two-reactor metal hydride thermal storage: simulation and control.

A stiff nonlinear plant model of two hydride beds exchanging hydrogen
through a compressor-boosted line, its affine linearization with exact
zero-order-hold discretization, and an integral-augmented model predictive
controller that tracks heat-rate references under box and rate input
constraints. Scenario files drive open-loop validation, re-linearization
frequency studies, and closed-loop tracking and disturbance-rejection runs.

State order everywhere is ``[T_hyd_A, T_hyd_B, P_H_A, P_H_B, w_A, w_B]``;
inputs are ``[mdot_wg_A, mdot_wg_B, dP_comp]`` and disturbances
``[T_wg_in_A, T_wg_in_B]``. All quantities are SI.
"""

from .backend import backend_name
from .core import (
    MODE_A_TO_B,
    MODE_B_TO_A,
    P_ATM,
    R_GAS,
    DomainError,
    chemical_potential,
    effectiveness,
    equilibrium_pressure,
    heat_rate,
    hydrogen_line_flow,
    reaction_rate,
)
from .linearize import (
    GROUPED_ORDER,
    DiscreteModel,
    LinearModel,
    discretize,
    eval_linear,
    linearize,
    to_grouped,
)
from .metrics import (
    SettlingReport,
    conservation_drift,
    nrmse_table,
    pooled_ranges,
    settling_report,
    step_response_shift,
    type_normalizers,
    window_indices,
    windowed_rmse,
)
from .mpc import ControllerConfig, MPCController, MPCError, StepResult
from .params import (
    ConfigError,
    FluidProperties,
    HydrideMaterial,
    HydrogenGas,
    HydrogenLine,
    PlantParams,
    ReactorGeometry,
    default_params_path,
    load_params,
)
from .plant import (
    CSV_HEADER,
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    ControlInput,
    Disturbance,
    PiecewiseConstant,
    PlantConfig,
    SystemState,
    Trajectory,
    advance,
    derived_outputs,
    hydrogen_inventory,
    integrate,
    state_derivative,
)
from .qp import QPError, QPResult, solve_qp
from .scenarios import (
    CTRL_CSV_HEADER,
    ClosedLoopResult,
    ControlLog,
    RelinStudyResult,
    Scenario,
    ValidationResult,
    load_scenario,
    packaged_scenario,
    packaged_scenario_names,
    resolve_scenario,
    run_closed_loop,
    run_open_loop,
    run_relin_study,
    run_validation,
    simulate_linear,
)
from .stiff import IntegrationError, StepStats, trbdf2

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    # core
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
    # params
    "ConfigError",
    "HydrideMaterial",
    "FluidProperties",
    "HydrogenGas",
    "ReactorGeometry",
    "HydrogenLine",
    "PlantParams",
    "load_params",
    "default_params_path",
    # plant
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
    # stiff
    "IntegrationError",
    "StepStats",
    "trbdf2",
    # linearize
    "LinearModel",
    "DiscreteModel",
    "linearize",
    "discretize",
    "eval_linear",
    "GROUPED_ORDER",
    "to_grouped",
    # qp
    "QPError",
    "QPResult",
    "solve_qp",
    # mpc
    "ControllerConfig",
    "MPCController",
    "MPCError",
    "StepResult",
    # metrics
    "pooled_ranges",
    "type_normalizers",
    "window_indices",
    "windowed_rmse",
    "nrmse_table",
    "conservation_drift",
    "step_response_shift",
    "SettlingReport",
    "settling_report",
    # scenarios
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
