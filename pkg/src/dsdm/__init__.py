"""Hybrid model, controller and simulator for a dual-speed dual-motor (DSDM) actuator."""

from .controller import ControllerCommand, ControllerConfig, ControllerState, Phase, controller_step
from .environment import CompliantLoad, FixedObstacle, Free, InertialLoad
from .model import HybridState, InvalidTransition, Mode, TorqueInput
from .params import ActuatorParams, ParameterError, fit_inertias
from .scenario import ScenarioSpec, load_scenario, parse_scenario, serialize_scenario
from .simulator import SimConfig, TraceRecord, compute_metrics, run_scenario, write_csv

__version__ = "0.1.0"

__all__ = [
    "ActuatorParams",
    "CompliantLoad",
    "ControllerCommand",
    "ControllerConfig",
    "ControllerState",
    "FixedObstacle",
    "Free",
    "HybridState",
    "InertialLoad",
    "InvalidTransition",
    "Mode",
    "ParameterError",
    "Phase",
    "ScenarioSpec",
    "SimConfig",
    "TorqueInput",
    "TraceRecord",
    "compute_metrics",
    "controller_step",
    "fit_inertias",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
    "serialize_scenario",
    "write_csv",
]
