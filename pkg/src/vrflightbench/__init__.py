"""Deterministic virtual drone harness for comparing flight controllers."""

__version__ = "0.1.0"

from .sim import DroneState, EnvironmentParams, SimConfig, Vec3
from .tasks import TaskCondition, TaskInstance, TrialPlan, difficulty_index, enumerate_conditions

__all__ = [
    "DroneState",
    "EnvironmentParams",
    "SimConfig",
    "Vec3",
    "TaskCondition",
    "TaskInstance",
    "TrialPlan",
    "difficulty_index",
    "enumerate_conditions",
    "__version__",
]
