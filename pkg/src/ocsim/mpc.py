"""Receding-horizon control loop.

Each outer step solves a fixed-length optimal control problem from the
current realized state, executes the first apply_steps controls through the
(possibly noisy) plant, and replans.  The previous plan, shifted and
zero-padded, warm-starts the next solve.  State perturbations can be
injected at chosen wall-clock steps to probe closed-loop robustness.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .costs import CostSpec, TerminalDistance
from .ilqr import OcpProblem, SolverOptions, solve
from .plants import (
    NoiseSpec,
    Plant,
    TwoLinkArm,
    ZERO_NOISE,
    clamp_control,
    end_effector_state,
    step,
)
from .trajectory import FLAG_SATURATED, Trajectory


@dataclass(eq=False)
class MpcConfig:
    planning_horizon: int
    max_wall_steps: int
    target_radius: float
    apply_steps: int = 1
    max_speed: float = 0.05
    solver_options: SolverOptions | None = None
    perturbations: tuple = ()

    def __post_init__(self):
        if self.planning_horizon < 1:
            raise ValueError("planning_horizon must be at least 1")
        if not (1 <= self.apply_steps <= self.planning_horizon):
            raise ValueError("apply_steps must lie in [1, planning_horizon]")
        if self.max_wall_steps < 1:
            raise ValueError("max_wall_steps must be at least 1")
        if self.target_radius <= 0:
            raise ValueError("target_radius must be positive")
        if self.max_speed <= 0:
            raise ValueError("max_speed must be positive")
        if self.solver_options is None:
            self.solver_options = SolverOptions()
        cleaned = []
        for entry in self.perturbations:
            idx, delta = entry
            if int(idx) != idx or idx < 0:
                raise ValueError("perturbation step index must be a non-negative int")
            cleaned.append((int(idx), np.asarray(delta, dtype=float)))
        self.perturbations = tuple(cleaned)


@dataclass(eq=False)
class ReplanRecord:
    wall_step: int
    plan_cost: float
    iterations: int
    converged: bool
    solve_time: float


@dataclass(eq=False)
class MpcLog:
    replans: list
    trajectory: Trajectory
    termination_reason: str

    def to_json_dict(self) -> dict:
        """JSON form of the log. Wall-clock solve times are deliberately
        left out so identical runs serialize byte-identically."""
        return {
            "termination_reason": self.termination_reason,
            "replans": [
                {
                    "wall_step": r.wall_step,
                    "plan_cost": repr(r.plan_cost),
                    "iterations": r.iterations,
                    "converged": r.converged,
                }
                for r in self.replans
            ],
            "n_executed_steps": self.trajectory.n_steps,
        }


def _goal_term(cost: CostSpec) -> TerminalDistance:
    for term in cost.terms:
        if isinstance(term, TerminalDistance):
            return term
    raise ValueError("cost must contain a TerminalDistance term for MPC termination")


def goal_metrics(plant: Plant, cost: CostSpec, x) -> tuple[float, float]:
    """Distance to the goal and speed, both measured in the goal's space."""
    term = _goal_term(cost)
    x = np.asarray(x, dtype=float)
    if term.space == "end_effector" and isinstance(plant, TwoLinkArm):
        pos, vel = end_effector_state(plant, x)
    else:
        pos, vel = plant.position(x), plant.velocity(x)
    return float(np.linalg.norm(pos - term.target)), float(np.linalg.norm(vel))


def run_mpc(
    plant: Plant,
    cost: CostSpec,
    x0,
    config: MpcConfig,
    noise: NoiseSpec = ZERO_NOISE,
    seed: int = 0,
) -> MpcLog:
    """Plan/execute until the goal is acquired or the step budget runs out.

    Termination ("target reached") requires both distance < target_radius
    and speed < max_speed, checked before each replan.  Perturbation deltas
    are added to the realized state at their wall-step index (index 0 is the
    initial state).  Controls are recorded post-clamp with saturation flags.
    """
    _goal_term(cost)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (plant.state_dim,):
        raise ValueError("x0 dimension must match the plant state")
    deltas: dict[int, np.ndarray] = {}
    for idx, delta in config.perturbations:
        if delta.shape != (plant.state_dim,):
            raise ValueError("perturbation delta dimension must match the plant state")
        deltas[idx] = deltas.get(idx, 0.0) + delta

    rng = np.random.default_rng(seed) if noise.control_noise_active else None
    if 0 in deltas:
        x = x + deltas[0]

    states = [x.copy()]
    controls = []
    flags = []
    replans = []
    warm = None
    wall = 0
    reason = "max_wall_steps"
    while True:
        dist, speed = goal_metrics(plant, cost, x)
        if dist < config.target_radius and speed < config.max_speed:
            reason = "target reached"
            break
        if wall >= config.max_wall_steps:
            reason = "max_wall_steps"
            break
        problem = OcpProblem(plant, cost, x)
        t0 = time.perf_counter()
        sol = solve(problem, config.solver_options, warm_start=warm)
        replans.append(
            ReplanRecord(
                wall_step=wall,
                plan_cost=sol.cost,
                iterations=sol.iterations,
                converged=sol.converged,
                solve_time=time.perf_counter() - t0,
            )
        )
        n_apply = min(config.apply_steps, config.max_wall_steps - wall)
        for j in range(n_apply):
            u, saturated = clamp_control(plant, sol.trajectory.controls[j])
            x = step(plant, x, u, noise, rng)
            if not np.all(np.isfinite(x)):
                raise RuntimeError(
                    f"non-finite state at wall step {wall + 1}; aborting MPC run"
                )
            wall += 1
            if wall in deltas:
                x = x + deltas[wall]
            states.append(x.copy())
            controls.append(u)
            flags.append(FLAG_SATURATED if saturated else 0)
        warm = np.vstack(
            [
                sol.trajectory.controls[n_apply:],
                np.zeros((n_apply, plant.control_dim)),
            ]
        )

    traj = Trajectory(
        dt=plant.dt,
        states=np.asarray(states),
        controls=np.asarray(controls, dtype=float).reshape(len(controls), plant.control_dim),
        seed=seed,
        flags=np.asarray(flags, dtype=int),
    )
    return MpcLog(replans=replans, trajectory=traj, termination_reason=reason)


def mpc_movement_time(log: MpcLog) -> float:
    """Executed duration of a run that acquired the target."""
    if log.termination_reason != "target reached":
        raise ValueError(
            f"movement time undefined: run ended with '{log.termination_reason}'"
        )
    return log.trajectory.n_steps * log.trajectory.dt
