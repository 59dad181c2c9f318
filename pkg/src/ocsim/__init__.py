"""Optimal-control movement simulation and acoustic-levitation path timing."""

__version__ = "0.1.0"

from .trajectory import Trajectory
from .plants import (
    NoiseSpec,
    PointMass1D,
    PointMass2D,
    TwoLinkArm,
    LevitatedParticle,
    make_plant,
    step,
    rollout,
    linearize,
    end_effector_state,
    forward_kinematics,
)
from .costs import (
    ControlEffort,
    JointAcceleration,
    TerminalDistance,
    TerminalStability,
    TimeConstant,
    CostSpec,
    evaluate,
    quadratize,
)
from .lqg import (
    LqgProblem,
    LqgSolution,
    lqr_solve,
    lqg_solve,
    lqg_rollout,
    predicted_endpoint,
)
from .ilqr import OcpProblem, SolverOptions, OcpSolution, solve, evaluate_candidate
from .mpc import MpcConfig, MpcLog, run_mpc, mpc_movement_time
from .shapes import PathSpec, make_shape
from .levitation import TrapParams, required_trap, topp_solve, simulate_render
from .analysis import (
    TrialRecord,
    FitResult,
    ProfileMetrics,
    fitts_fit,
    power_law_fit,
    velocity_profile_metrics,
)
from .config import ConfigError, load_config, validate_config, config_hash
from .experiments import (
    lqg_reach,
    fitts_sweep,
    mpc_reach,
    mpc_perturb,
    regression_suite,
    levitate_run,
)

__all__ = [
    "Trajectory",
    "NoiseSpec",
    "PointMass1D",
    "PointMass2D",
    "TwoLinkArm",
    "LevitatedParticle",
    "make_plant",
    "step",
    "rollout",
    "linearize",
    "end_effector_state",
    "forward_kinematics",
    "ControlEffort",
    "JointAcceleration",
    "TerminalDistance",
    "TerminalStability",
    "TimeConstant",
    "CostSpec",
    "evaluate",
    "quadratize",
    "LqgProblem",
    "LqgSolution",
    "lqr_solve",
    "lqg_solve",
    "lqg_rollout",
    "OcpProblem",
    "SolverOptions",
    "OcpSolution",
    "solve",
    "evaluate_candidate",
    "MpcConfig",
    "MpcLog",
    "run_mpc",
    "mpc_movement_time",
    "predicted_endpoint",
    "PathSpec",
    "make_shape",
    "TrapParams",
    "required_trap",
    "topp_solve",
    "simulate_render",
    "TrialRecord",
    "FitResult",
    "ProfileMetrics",
    "fitts_fit",
    "power_law_fit",
    "velocity_profile_metrics",
    "ConfigError",
    "load_config",
    "validate_config",
    "config_hash",
    "lqg_reach",
    "fitts_sweep",
    "mpc_reach",
    "mpc_perturb",
    "regression_suite",
    "levitate_run",
    "__version__",
]
