"""Microscopic highway simulator comparing lane-change policies against a
lane-change-minimizing state machine."""

from .core import PolicyId, RoadNetwork, Vehicle, VehicleKind, World, follower_of, leader_of
from .config import ExperimentPlan, load_config, parse_config
from .engine import IterationLog, run_iteration
from .harness import run_experiment
from .metrics import CheckpointTable, TrialSummary
from .mlca import MLCASignals, MLCAState, check_invariants, mlca_step
from .scenario import ScenarioConfig, build_network, spawn_schedule

__version__ = "0.1.0"

__all__ = [
    "PolicyId", "RoadNetwork", "Vehicle", "VehicleKind", "World", "leader_of", "follower_of",
    "IterationLog", "run_iteration", "MLCAState", "MLCASignals", "mlca_step", "check_invariants",
    "ScenarioConfig", "build_network", "spawn_schedule", "ExperimentPlan", "load_config", "parse_config",
    "run_experiment", "CheckpointTable", "TrialSummary",
]
