"""Iterative LQR for nonlinear finite-horizon problems.

The solver alternates a backward pass on the locally quadratized problem
with a forward line search on the true (clamped, noise-free) dynamics.
Regularization follows the usual Levenberg scheme on the control Hessian:
mu is inflated whenever the backward pass hits a non-positive-definite
block or the line search fails, and relaxed after every accepted step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec, evaluate, quadratize
from .plants import ZERO_NOISE, Plant, clamp_control, linearize, rollout
from .trajectory import Trajectory


@dataclass(eq=False)
class OcpProblem:
    """A plant, a cost, an initial state, and a horizon."""

    plant: Plant
    cost: CostSpec
    x0: np.ndarray
    horizon: int | None = None

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = self.cost.horizon
        if self.horizon != self.cost.horizon:
            raise ValueError("problem horizon must match the cost horizon")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.plant.state_dim,):
            raise ValueError("x0 dimension must match the plant state")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")


@dataclass(eq=False)
class SolverOptions:
    max_iterations: int = 200
    cost_tolerance: float = 1e-8
    mu_init: float = 1e-6
    mu_min: float = 1e-9
    mu_max: float = 1e10
    mu_factor: float = 10.0
    line_search_steps: tuple = tuple(0.5**i for i in range(11))

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.cost_tolerance <= 0:
            raise ValueError("cost_tolerance must be positive")
        if not (0 < self.mu_min <= self.mu_init <= self.mu_max):
            raise ValueError("need 0 < mu_min <= mu_init <= mu_max")
        if self.mu_factor <= 1:
            raise ValueError("mu_factor must exceed 1")
        if len(self.line_search_steps) == 0:
            raise ValueError("line_search_steps must be non-empty")


@dataclass(eq=False)
class OcpSolution:
    trajectory: Trajectory
    feedback_gains: np.ndarray
    cost: float
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)


def evaluate_candidate(problem: OcpProblem, controls):
    """Roll a control sequence through the noise-free plant and price it."""
    controls = np.asarray(controls, dtype=float)
    traj = rollout(problem.plant, problem.x0, controls, ZERO_NOISE, seed=0)
    return traj, evaluate(problem.cost, traj, problem.plant)


def _forward_pass(problem, states, controls, k_seq, gain_seq, alpha):
    """Apply the perturbed policy to the real plant, one step at a time."""
    plant = problem.plant
    n_steps = len(controls)
    new_controls = np.empty_like(controls)
    x = states[0].copy()
    for k in range(n_steps):
        u = controls[k] - alpha * k_seq[k] - gain_seq[k] @ (x - states[k])
        u, _ = clamp_control(plant, u)
        new_controls[k] = u
        x = plant.step_deterministic(x, u)
        if not np.all(np.isfinite(x)):
            return None, None
    traj = rollout(plant, problem.x0, new_controls, ZERO_NOISE, seed=0)
    return traj, evaluate(problem.cost, traj, problem.plant)


def solve(
    problem: OcpProblem,
    options: SolverOptions | None = None,
    warm_start=None,
) -> OcpSolution:
    """Run iLQR from a warm-start control sequence (zeros by default).

    Returns the best trajectory found together with the time-varying
    feedback gains of the final backward pass, so callers can track the
    plan between replans.  converged=False means the iteration or
    regularization budget ran out first; the solution is still the best
    iterate seen.
    """
    if options is None:
        options = SolverOptions()
    plant = problem.plant
    n_steps = problem.horizon
    n, m = plant.state_dim, plant.control_dim
    if warm_start is None:
        controls = np.zeros((n_steps, m))
    else:
        controls = np.array(warm_start, dtype=float)
        if controls.shape != (n_steps, m):
            raise ValueError("warm start must be (horizon, control_dim)")

    traj, cost = evaluate_candidate(problem, controls)
    controls = traj.controls.copy()
    cost_history = [cost]
    mu = options.mu_init
    gain_seq = np.zeros((n_steps, m, n))
    converged = False
    iterations = 0

    for iterations in range(1, options.max_iterations + 1):
        states = traj.states
        lin = [linearize(plant, states[k], controls[k]) for k in range(n_steps)]
        quads = [
            quadratize(problem.cost, states[k], controls[k], k, plant, linearization=lin[k])
            for k in range(n_steps)
        ]
        tail = quadratize(problem.cost, states[n_steps], None, n_steps, plant)

        # Backward pass; restart with stiffer regularization on indefinite Quu.
        while True:
            v_x = tail.lx.copy()
            v_xx = tail.lxx.copy()
            k_seq = np.zeros((n_steps, m))
            new_gains = np.zeros((n_steps, m, n))
            expected_decrease = 0.0
            failed = False
            for k in reversed(range(n_steps)):
                a_mat, b_mat = lin[k]
                quad = quads[k]
                q_x = quad.lx + a_mat.T @ v_x
                q_u = quad.lu + b_mat.T @ v_x
                q_xx = quad.lxx + a_mat.T @ v_xx @ a_mat
                q_uu = quad.luu + b_mat.T @ v_xx @ b_mat
                q_ux = quad.lux + b_mat.T @ v_xx @ a_mat
                q_uu_reg = q_uu + mu * np.eye(m)
                try:
                    chol = np.linalg.cholesky(0.5 * (q_uu_reg + q_uu_reg.T))
                except np.linalg.LinAlgError:
                    failed = True
                    break
                rhs = np.column_stack([q_u, q_ux])
                sol = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
                # One iterative-refinement step against the unregularized
                # system: quadratically accurate where Quu is well
                # conditioned, and bounded (at most doubling the step)
                # where the mu term is actually load-bearing.
                resid = rhs - q_uu @ sol
                sol += np.linalg.solve(chol.T, np.linalg.solve(chol, resid))
                k_seq[k] = sol[:, 0]
                new_gains[k] = sol[:, 1:]
                expected_decrease += float(q_u @ k_seq[k])
                v_x = (
                    q_x
                    + new_gains[k].T @ q_uu @ k_seq[k]
                    - new_gains[k].T @ q_u
                    - q_ux.T @ k_seq[k]
                )
                v_xx = (
                    q_xx
                    + new_gains[k].T @ q_uu @ new_gains[k]
                    - new_gains[k].T @ q_ux
                    - q_ux.T @ new_gains[k]
                )
                v_xx = 0.5 * (v_xx + v_xx.T)
            if not failed:
                break
            mu *= options.mu_factor
            if mu > options.mu_max:
                return OcpSolution(
                    trajectory=traj,
                    feedback_gains=gain_seq,
                    cost=cost,
                    iterations=iterations,
                    converged=False,
                    cost_history=cost_history,
                )
        gain_seq = new_gains

        if expected_decrease < options.cost_tolerance * max(1.0, abs(cost)):
            converged = True
            break

        accepted = False
        for alpha in options.line_search_steps:
            cand_traj, cand_cost = _forward_pass(
                problem, states, controls, k_seq, gain_seq, alpha
            )
            if cand_traj is None:
                continue
            if cand_cost < cost:
                improvement = cost - cand_cost
                traj, cost = cand_traj, cand_cost
                controls = traj.controls.copy()
                cost_history.append(cost)
                mu = max(mu / options.mu_factor, options.mu_min)
                accepted = True
                if improvement < options.cost_tolerance * max(1.0, abs(cost)):
                    converged = True
                break
        if not accepted:
            mu *= options.mu_factor
            if mu > options.mu_max:
                break
        if converged:
            break

    return OcpSolution(
        trajectory=traj,
        feedback_gains=gain_seq,
        cost=cost,
        iterations=iterations,
        converged=converged,
        cost_history=cost_history,
    )
