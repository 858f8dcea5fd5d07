"""Hybrid feedback navigation among spherical obstacles in R^n."""
from .controller import HybridController, HybridState, VirtualDestinations
from .diffdrive import DriveParams, UnicycleState, adapt, unicycle_step
from .estimator import HybridNavigator
from .executor import Outcome, RunConfig, Trajectory, run
from .metrics import Metrics, compute_metrics, path_length, rld
from .scenario import Scenario, load_scenario, random_world
from .world import Obstacle, Workspace, WorkspaceError, build_workspace, validate

__all__ = [
    "HybridController", "HybridState", "VirtualDestinations",
    "DriveParams", "UnicycleState", "adapt", "unicycle_step",
    "HybridNavigator", "Outcome", "RunConfig", "Trajectory", "run",
    "Metrics", "compute_metrics", "path_length", "rld",
    "Scenario", "load_scenario", "random_world",
    "Obstacle", "Workspace", "WorkspaceError", "build_workspace", "validate",
]
__version__ = "0.1.0"
