"""Macroscopic motorway simulation with metered on-ramps and model-free ramp control."""

from .control import ControllerSettings, IpConfig
from .metrics import MetricsReport, compare_runs, compute_report
from .network import Network, Ramp, Segment, reference_network
from .scenario import ScenarioError, load_preset, parse_scenario, serialize_scenario
from .simulation import DemandProfile, Incident, Noise, Scenario, SimulationFault, simulate

__all__ = [
    "ControllerSettings",
    "DemandProfile",
    "Incident",
    "IpConfig",
    "MetricsReport",
    "Network",
    "Noise",
    "Ramp",
    "Scenario",
    "ScenarioError",
    "Segment",
    "SimulationFault",
    "compare_runs",
    "compute_report",
    "load_preset",
    "parse_scenario",
    "reference_network",
    "serialize_scenario",
    "simulate",
]
