"""End-to-end experiment drivers shared by the command line and the tests.

Each driver builds its models from explicit parameters (defaults chosen to
run in seconds on a laptop), executes the experiment, and returns a plain
dict of results next to the rich objects, so callers can serialize without
reaching into solver internals.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .analysis import TrialRecord, fitts_fit, velocity_profile_metrics
from .costs import (
    ControlEffort,
    CostSpec,
    JointAcceleration,
    TerminalDistance,
    TerminalStability,
)
from .ilqr import SolverOptions
from .levitation import TrapParams, simulate_render, topp_solve
from .lqg import LqgProblem, lqg_rollout, lqg_solve, predicted_endpoint
from .mpc import MpcConfig, mpc_movement_time, run_mpc
from .plants import (
    NoiseSpec,
    PointMass1D,
    TwoLinkArm,
    forward_kinematics,
    linearize,
)
from .shapes import PathSpec, make_shape

__all__ = [
    "reach_positions",
    "lqg_reach",
    "fitts_sweep",
    "mpc_reach",
    "mpc_perturb",
    "regression_suite",
    "levitate_run",
]


def reach_positions(plant, trajectory):
    """Positions to run profile metrics on: end effector for the arm,
    the position block otherwise."""
    if isinstance(plant, TwoLinkArm):
        return np.stack(
            [forward_kinematics(plant, x[0:2])[0] for x in trajectory.states]
        )
    return trajectory.states[:, plant.position_slice]


def _point_mass_lqg_problem(
    distance, horizon, dt, sigma_u, mass=1.0, damping=0.0,
    position_weight=1000.0, velocity_weight=10.0, effort_weight=0.01,
):
    """1D reach as a regulation problem: start at `distance`, drive to 0."""
    plant = PointMass1D(mass=mass, damping=damping, dt=dt)
    a_mat, b_mat = linearize(plant, np.zeros(2), np.zeros(1))
    return LqgProblem(
        A=a_mat,
        B=b_mat,
        Q=np.zeros((2, 2)),
        R=effort_weight * np.eye(1),
        Q_N=np.diag([position_weight, velocity_weight]),
        horizon=horizon,
        noise=NoiseSpec(signal_dependent_scale=sigma_u),
        x0_mean=np.array([distance, 0.0]),
    )


def lqg_reach(
    sigma_us=(0.1, 0.2, 0.4),
    n_trials=10000,
    distance=0.15,
    horizon=80,
    dt=0.01,
    seed=0,
):
    """Endpoint scatter of a 1D reach as signal-dependent noise grows.

    Solves the same reach at each noise level, prices it exactly, and also
    rolls out n_trials closed-loop simulations per level to measure the
    empirical endpoint spread. The mean (noise-free) trajectory is returned
    for profile-shape checks.
    """
    sigma_us = [float(s) for s in sigma_us]
    rows = []
    mean_trajectory = None
    for sigma in sigma_us:
        problem = _point_mass_lqg_problem(distance, horizon, dt, sigma)
        solution = lqg_solve(problem)
        pred_mean, pred_cov = predicted_endpoint(problem, solution)
        trials = lqg_rollout(problem, solution, n_trials, seed=seed, dt=dt)
        endpoints = np.array([t.states[-1, 0] for t in trials])
        if mean_trajectory is None:
            mean_trajectory = _closed_loop_mean(problem, solution, dt)
        rows.append(
            {
                "sigma_u": sigma,
                "endpoint_std": float(endpoints.std()),
                "endpoint_mean": float(endpoints.mean()),
                "predicted_std": float(np.sqrt(pred_cov[0, 0])),
                "predicted_cost": solution.predicted_cost,
                "converged": solution.converged,
                "n_trials": int(n_trials),
            }
        )
    metrics = velocity_profile_metrics(mean_trajectory[:, 0:1], dt)
    return {
        "rows": rows,
        "mean_trajectory": mean_trajectory,
        "mean_profile": metrics,
        "dt": dt,
    }


def _closed_loop_mean(problem, solution, dt):
    """Noise-free closed-loop states under the solved gains."""
    x = problem.x0_mean.copy()
    states = [x]
    for k in range(problem.horizon):
        u = -solution.control_gains[k] @ x
        x = problem.A @ x + problem.B @ u
        states.append(x)
    return np.asarray(states)


def fitts_conditions(ids, distance):
    """Target widths for the requested difficulties at a fixed distance,
    from the Shannon formulation ID = log2(D / W + 1)."""
    return [(float(distance), distance / (2.0 ** float(i) - 1.0)) for i in ids]


def fitts_sweep(
    mode="mpc",
    ids=(1.5, 2.2, 2.9, 3.6, 4.3, 5.0),
    distance=0.15,
    conditions=None,
    n_trials=20,
    sigma_u=0.2,
    seed=0,
    dt=0.01,
    max_wall_steps=2000,
):
    """Movement time versus index of difficulty, two ways.

    mode="mpc": noisy receding-horizon reaches on a damped 1D point mass.
    Each condition first picks an intended movement duration from the
    speed-accuracy analysis (the shortest horizon whose exactly-predicted
    endpoint scatter under signal-dependent noise fits the target), then
    executes with that planning horizon, correcting online. The target
    radius is half the target width, and acquisition uses tap semantics (a
    generous speed gate): entering the target counts, as in reciprocal
    tapping. Movement times are averaged per condition before the Fitts
    regression.

    mode="lqg": no rollouts at all. For each condition the intended duration
    from the same speed-accuracy analysis IS the movement time.
    Deterministic and fast.

    Conditions come either from `ids` at a fixed `distance` (the Shannon
    formulation decides the widths) or from an explicit `conditions` list of
    (distance, width) pairs, which takes precedence.
    """
    if conditions is None:
        conditions = fitts_conditions(ids, distance)
    else:
        conditions = [(float(d), float(w)) for d, w in conditions]
        if not conditions:
            raise ValueError("conditions must be non-empty")
        for d, w in conditions:
            if d <= 0 or w <= 0:
                raise ValueError("condition distances and widths must be positive")
    if mode == "mpc":
        return _fitts_sweep_mpc(
            conditions, n_trials, sigma_u, seed, dt, max_wall_steps
        )
    if mode == "lqg":
        return _fitts_sweep_lqg(conditions, sigma_u, dt)
    raise ValueError(f"unknown fitts sweep mode {mode!r}; expected 'mpc' or 'lqg'")


def _capture_horizon(dist, width, sigma_u, dt, max_horizon=600, hit_probability=0.95):
    """Shortest reach horizon whose predicted endpoint distribution lands
    inside the target with at least `hit_probability`.

    A too-short horizon fails through its mean (the cheap policy does not
    bother moving), a too-fast one through its spread (signal-dependent
    noise); both come from the exact moment propagation, so no rollouts are
    needed. Exponential search brackets the transition, bisection refines it.
    """
    half_width = width / 2.0

    def capture_probability(horizon):
        problem = _point_mass_lqg_problem(dist, horizon, dt, sigma_u)
        solution = lqg_solve(problem)
        mean, cov = predicted_endpoint(problem, solution)
        mu = float(mean[0])
        std = float(np.sqrt(max(cov[0, 0], 0.0)))
        if std < 1e-300:
            return 1.0 if abs(mu) <= half_width else 0.0
        return float(
            norm.cdf((half_width - mu) / std) - norm.cdf((-half_width - mu) / std)
        )

    hi = 4
    while hi <= max_horizon and capture_probability(hi) < hit_probability:
        hi *= 2
    if hi > max_horizon:
        raise RuntimeError(
            f"no horizon up to {max_horizon} captures width {width:.4g} "
            f"with probability {hit_probability}"
        )
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if capture_probability(mid) >= hit_probability:
            hi = mid
        else:
            lo = mid
    return hi


def _fitts_sweep_mpc(conditions, n_trials, sigma_u, seed, dt, max_wall_steps):
    plant = PointMass1D(mass=1.0, damping=0.5, dt=dt)
    noise = NoiseSpec(signal_dependent_scale=sigma_u)
    rng = np.random.default_rng(seed)
    trial_seeds = rng.integers(0, 2**31 - 1, size=(len(conditions), n_trials))

    trials = []
    condition_rows = []
    for c, (dist, width) in enumerate(conditions):
        horizon = max(_capture_horizon(dist, width, sigma_u, dt), 4)
        cost = CostSpec(
            terms=(
                TerminalDistance(target=(dist,), weight=300.0),
                TerminalStability(weight=10.0),
                ControlEffort(weight=1e-4),
            ),
            horizon=horizon,
        )
        # Tap-style acquisition: the speed gate is far above any speed the
        # reach produces, so crossing into the target ends the trial.
        config = MpcConfig(
            planning_horizon=horizon,
            max_wall_steps=max_wall_steps,
            target_radius=width / 2.0,
            apply_steps=2,
            max_speed=5.0,
        )
        times = []
        for t in range(n_trials):
            log = run_mpc(
                plant,
                cost,
                np.zeros(2),
                config,
                noise=noise,
                seed=int(trial_seeds[c, t]),
            )
            reached = log.termination_reason == "target reached"
            record = {
                "condition": c,
                "distance": dist,
                "width": width,
                "reached": reached,
                "converged": reached and all(r.converged for r in log.replans),
                "movement_time": mpc_movement_time(log) if reached else None,
                "endpoint": float(log.trajectory.states[-1, 0]),
                "positions": log.trajectory.states[:, 0:1],
                "seed": int(trial_seeds[c, t]),
            }
            trials.append(record)
            if reached:
                times.append(record["movement_time"])
        if not times:
            raise RuntimeError(
                f"no trial reached the target for width {width:.4g}; "
                "cannot fit movement times"
            )
        condition_rows.append(
            {
                "distance": dist,
                "width": width,
                "index_of_difficulty": float(np.log2(dist / width + 1.0)),
                "mean_movement_time": float(np.mean(times)),
                "horizon": horizon,
                "n_reached": len(times),
                "n_trials": n_trials,
            }
        )

    fit = fitts_fit(
        [
            TrialRecord(r["distance"], r["width"], r["mean_movement_time"])
            for r in condition_rows
        ]
    )
    return {"mode": "mpc", "fit": fit, "conditions": condition_rows,
            "trials": trials, "dt": dt}


def _fitts_sweep_lqg(conditions, sigma_u, dt):
    condition_rows = []
    for dist, width in conditions:
        horizon = _capture_horizon(dist, width, sigma_u, dt)
        condition_rows.append(
            {
                "distance": dist,
                "width": width,
                "index_of_difficulty": float(np.log2(dist / width + 1.0)),
                "mean_movement_time": horizon * dt,
                "horizon": horizon,
            }
        )
    fit = fitts_fit(
        [
            TrialRecord(r["distance"], r["width"], r["mean_movement_time"])
            for r in condition_rows
        ]
    )
    return {"mode": "lqg", "fit": fit, "conditions": condition_rows,
            "trials": [], "dt": dt}


def _arm_reach_setup(dt=0.01, planning_horizon=60, reach=(0.15, 0.0), arm_params=None):
    """Two-link arm, a start posture, and a cost reaching 15 cm to the right."""
    arm = TwoLinkArm(dt=dt, **(arm_params or {}))
    q0 = np.array([np.pi / 4.0, np.pi / 2.0])
    x0 = np.zeros(8)
    x0[0:2] = q0
    start, _ = forward_kinematics(arm, q0)
    target = start + np.asarray(reach, dtype=float)
    cost = CostSpec(
        terms=(
            TerminalDistance(target=tuple(target), weight=1000.0, space="end_effector"),
            TerminalStability(weight=10.0),
            ControlEffort(weight=1e-4),
            JointAcceleration(weight=1e-5),
        ),
        horizon=planning_horizon,
    )
    return arm, x0, target, cost


def mpc_reach(
    plant_kind="two-link-arm",
    distance=0.15,
    dt=0.01,
    planning_horizon=60,
    apply_steps=1,
    target_radius=0.01,
    max_speed=5.0,
    max_wall_steps=600,
    sigma_u=0.0,
    seed=0,
    perturbations=(),
    cost_terms=None,
    solver_options=None,
    plant_params=None,
):
    """One receding-horizon reach, returning the log and shape metrics.

    Acquisition defaults to tap semantics (max_speed far above reach
    speeds): crossing into the target ends the movement, which keeps the
    profile free of a settling tail. Pass a small max_speed for
    point-and-hold semantics instead. cost_terms, solver_options, and
    plant_params override the per-plant defaults when given.
    """
    noise = NoiseSpec(signal_dependent_scale=sigma_u)
    plant_params = dict(plant_params or {})
    if plant_kind == "two-link-arm":
        plant, x0, target, cost = _arm_reach_setup(
            dt, planning_horizon, (distance, 0.0), arm_params=plant_params
        )
    elif plant_kind == "point-mass-1d":
        plant_params.setdefault("mass", 1.0)
        plant_params.setdefault("damping", 0.5)
        plant = PointMass1D(dt=dt, **plant_params)
        x0 = np.zeros(2)
        target = np.array([distance])
        cost = CostSpec(
            terms=(
                TerminalDistance(target=(distance,), weight=300.0),
                TerminalStability(weight=10.0),
                ControlEffort(weight=1e-4),
            ),
            horizon=planning_horizon,
        )
    else:
        raise ValueError(f"unknown plant kind {plant_kind!r}")
    if cost_terms is not None:
        cost = CostSpec(terms=tuple(cost_terms), horizon=planning_horizon)
    config = MpcConfig(
        planning_horizon=planning_horizon,
        apply_steps=apply_steps,
        max_wall_steps=max_wall_steps,
        target_radius=target_radius,
        max_speed=max_speed,
        solver_options=solver_options,
        perturbations=tuple(perturbations),
    )
    log = run_mpc(plant, cost, x0, config, noise=noise, seed=seed)
    reached = log.termination_reason == "target reached"
    positions = reach_positions(plant, log.trajectory)
    result = {
        "plant": plant_kind,
        "termination_reason": log.termination_reason,
        "movement_time": mpc_movement_time(log) if reached else None,
        "n_steps": log.trajectory.n_steps,
        "log": log,
        "positions": positions,
        "target": np.asarray(target, dtype=float),
        "dt": dt,
    }
    if reached and log.trajectory.n_steps >= 10:
        result["profile"] = velocity_profile_metrics(positions, dt)
    return result


def regression_suite(seed=0):
    """The canonical reach battery shared by the shape, monotonicity,
    warm-start, and robustness checks.

    Membership: point-mass and arm tap reaches at two distances, each with
    a doubled-radius variant; mid-movement position perturbations of 25% of
    the movement amplitude in both directions; and two noisy point-mass
    reaches. Every run uses the default receding loop (replan each step).
    Returns one record per run with the log, movement time, and profile
    metrics; `wide_of` names the half-radius partner of a doubled-radius
    variant.
    """
    records = []

    def add(name, wide_of=None, **kwargs):
        result = mpc_reach(**kwargs)
        reached = result["termination_reason"] == "target reached"
        records.append(
            {
                "name": name,
                "wide_of": wide_of,
                "reached": reached,
                "converged": reached
                and all(r.converged for r in result["log"].replans),
                "movement_time": result["movement_time"],
                "profile": result.get("profile"),
                "log": result["log"],
                "positions": result["positions"],
                "target": result["target"],
                "dt": result["dt"],
                "target_radius": kwargs.get("target_radius", 0.01),
            }
        )
        return result

    pm = {"plant_kind": "point-mass-1d"}
    base = add("pm-reach", **pm, distance=0.15, target_radius=0.01)
    add("pm-reach-wide", wide_of="pm-reach", **pm, distance=0.15,
        target_radius=0.02)
    add("pm-short", **pm, distance=0.075, target_radius=0.01)
    add("pm-short-wide", wide_of="pm-short", **pm, distance=0.075,
        target_radius=0.02)

    # 25% amplitude pushes in both directions. A push toward the target
    # shortens the movement, so it goes in early; a push away extends it,
    # so mid-movement keeps the recovery transient centred.
    n_base = base["log"].trajectory.n_steps
    for label, sign, step in (
        ("fwd", 1.0, max(n_base // 4, 1)),
        ("back", -1.0, max(n_base // 2, 1)),
    ):
        delta = np.zeros(2)
        delta[0] = sign * 0.25 * 0.15
        add(
            f"pm-perturb-{label}",
            **pm,
            distance=0.15,
            target_radius=0.01,
            perturbations=((step, delta),),
            max_wall_steps=1200,
        )

    rng = np.random.default_rng(seed)
    for label in ("a", "b"):
        add(
            f"pm-noisy-{label}",
            **pm,
            distance=0.15,
            target_radius=0.01,
            sigma_u=0.2,
            seed=int(rng.integers(0, 2**31 - 1)),
            max_wall_steps=1200,
        )

    arm_base = add("arm-reach", plant_kind="two-link-arm", distance=0.15,
                   target_radius=0.01)
    add("arm-reach-wide", wide_of="arm-reach", plant_kind="two-link-arm",
        distance=0.15, target_radius=0.02)

    # Arm perturbation: 25% of the reach amplitude in end-effector space,
    # pushed away from the target, mapped through the Jacobian at the
    # nominal midpoint posture.
    arm_traj = arm_base["log"].trajectory
    arm_mid = max(arm_traj.n_steps // 2, 1)
    q_mid = arm_traj.states[arm_mid, 0:2]
    arm = TwoLinkArm(dt=0.01)
    _, jac = forward_kinematics(arm, q_mid)
    delta = np.zeros(8)
    delta[0:2] = np.linalg.solve(jac, np.array([-0.25 * 0.15, 0.0]))
    add(
        "arm-perturb",
        plant_kind="two-link-arm",
        distance=0.15,
        target_radius=0.01,
        perturbations=((arm_mid, delta),),
        max_wall_steps=1200,
    )
    return records


def mpc_perturb(
    n_runs=10,
    perturbation_size=0.05,
    dt=0.01,
    planning_horizon=60,
    target_radius=0.01,
    max_wall_steps=600,
    seed=0,
):
    """Mid-movement displacement test on the two-link reach.

    A nominal run fixes the movement's midpoint; each seeded run then
    displaces the joint state there by the Jacobian preimage of a
    `perturbation_size` step in a random end-effector direction. The runs
    are deterministic up to that step, so the nominal midpoint posture is
    the perturbed runs' posture too.
    """
    plant, x0, target, cost = _arm_reach_setup(dt, planning_horizon)
    config = MpcConfig(
        planning_horizon=planning_horizon,
        max_wall_steps=max_wall_steps,
        target_radius=target_radius,
    )
    nominal = run_mpc(plant, cost, x0, config)
    if nominal.termination_reason != "target reached":
        raise RuntimeError(
            f"nominal reach failed: {nominal.termination_reason!r}"
        )
    mid_step = nominal.trajectory.n_steps // 2
    q_mid = nominal.trajectory.states[mid_step, 0:2]
    _, jac = forward_kinematics(plant, q_mid)

    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_runs)
    runs = []
    for i in range(n_runs):
        push = perturbation_size * np.array([np.cos(angles[i]), np.sin(angles[i])])
        delta = np.zeros(8)
        delta[0:2] = np.linalg.solve(jac, push)
        perturbed = MpcConfig(
            planning_horizon=planning_horizon,
            max_wall_steps=max_wall_steps,
            target_radius=target_radius,
            perturbations=((mid_step, delta),),
        )
        log = run_mpc(plant, cost, x0, perturbed)
        reached = log.termination_reason == "target reached"
        runs.append(
            {
                "angle": float(angles[i]),
                "reached": reached,
                "movement_time": mpc_movement_time(log) if reached else None,
                "termination_reason": log.termination_reason,
            }
        )
    return {
        "nominal_movement_time": mpc_movement_time(nominal),
        "perturbation_step": mid_step,
        "n_reached": sum(1 for r in runs if r["reached"]),
        "n_runs": n_runs,
        "runs": runs,
        "target": target,
    }


@dataclass(eq=False)
class LevitationRun:
    """Everything produced by one shape-to-schedule pipeline pass."""

    path: PathSpec
    timing_law: object
    trap_trajectory: object
    render: object

    def report(self) -> dict:
        drift = self.render.per_cycle_drift
        return {
            "period": self.timing_law.period,
            "feasible": bool(self.trap_trajectory.feasible),
            "peak_trap_offset": self.trap_trajectory.peak_offset,
            "escaped": bool(self.render.escaped),
            "rms_deviation": self.render.rms_deviation,
            "max_deviation": self.render.max_deviation,
            "max_cycle_drift": float(max(drift)) if drift else 0.0,
            "diameter": self.path.diameter,
        }


DEFAULT_SHAPE_PARAMS = {
    "circle": {"radius": 0.01},
    "ellipse": {"semi_major": 0.012, "semi_minor": 0.006},
    "cardioid": {"scale": 0.004},
    "rounded-square": {"side": 0.015, "corner_radius": 0.003},
}


def levitate_run(
    shape="circle",
    shape_params=None,
    trap_params=None,
    n_grid=1000,
    output_rate=10000.0,
    safety_margin=None,
    cycles=10,
    warmup_cycles=3,
):
    """Time-optimal trap schedule for a named shape, plus a rendering check."""
    params = trap_params if trap_params is not None else TrapParams()
    merged = dict(DEFAULT_SHAPE_PARAMS.get(shape, {}))
    if shape_params:
        merged.update(shape_params)
    path = PathSpec(make_shape(shape, **merged))
    kwargs = {} if safety_margin is None else {"safety_margin": float(safety_margin)}
    law, traps = topp_solve(
        path, params, n_grid=n_grid, output_rate=output_rate, **kwargs
    )
    render = simulate_render(
        law, traps, params, cycles=cycles, warmup_cycles=warmup_cycles
    )
    return LevitationRun(
        path=path, timing_law=law, trap_trajectory=traps, render=render
    )
