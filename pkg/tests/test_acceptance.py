"""Acceptance gate: one test per release criterion.

Each test prints a PASS/FAIL line with the measured quantity and its
tolerance, so running this file with -s doubles as the acceptance report.
Budgets are wall-clock seconds on the reference container.
"""

import json
import time

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from ocsim.analysis import TrialRecord, fitts_fit, power_law_fit
from ocsim.cli import run_experiment
from ocsim.config import validate_config
from ocsim.costs import (
    ControlEffort,
    CostSpec,
    JointAcceleration,
    TerminalDistance,
    TerminalStability,
    quadratize,
    stage_cost,
)
from ocsim.experiments import fitts_sweep, lqg_reach, levitate_run, mpc_perturb
from ocsim.ilqr import OcpProblem, solve
from ocsim.levitation import TrapParams, required_trap, topp_solve
from ocsim.lqg import lqr_solve
from ocsim.plants import TwoLinkArm, forward_kinematics, linearize
from ocsim.shapes import PathSpec, make_shape


def _verdict(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}", flush=True)
    return ok


def test_criterion_01_lq_solver_matches_riccati(linear_plant_factory):
    """20 random linear-quadratic instances, horizon 5: the iterative solver
    must land on the Riccati cost within 1e-6 relative, in under 1 s."""
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        plant = linear_plant_factory(rng)
        x0 = rng.normal(size=2)
        w_dist, w_stab, w_effort = 50.0, 5.0, 0.1
        cost = CostSpec(
            terms=(
                TerminalDistance(target=(0.0,), weight=w_dist),
                TerminalStability(weight=w_stab),
                ControlEffort(weight=w_effort),
            ),
            horizon=5,
        )
        solution = solve(OcpProblem(plant=plant, cost=cost, x0=x0, horizon=5))
        _, values = lqr_solve(
            plant.a_mat, plant.b_mat, np.zeros((2, 2)), [[w_effort]],
            np.diag([w_dist, w_stab]), 5,
        )
        exact = float(x0 @ values[0] @ x0)
        worst = max(worst, abs(solution.cost - exact) / max(abs(exact), 1e-300))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 1.0
    assert _verdict(
        1, ok,
        f"20 LQ instances, worst relative cost error {worst:.2e} "
        f"(tol 1e-6), {elapsed:.2f} s (budget 1 s)",
    )


def test_criterion_02_riccati_beats_exhaustive_grid():
    """1-state, 2-step problem: the closed-loop Riccati policy must match or
    beat the best open-loop pair on a 0.01-step control grid over [-2, 2]^2,
    within 1e-4, in under 5 s."""
    a, b, q, r, q_n, x0 = 1.2, 1.0, 1.0, 1.0, 2.0, 1.0
    start = time.perf_counter()
    gains, _ = lqr_solve([[a]], [[b]], [[q]], [[r]], [[q_n]], horizon=2)
    x = x0
    policy_cost = 0.0
    for k in range(2):
        u = float(-gains[k][0, 0] * x)
        policy_cost += q * x * x + r * u * u
        x = a * x + b * u
    policy_cost += q_n * x * x

    grid = np.arange(-2.0, 2.0 + 1e-12, 0.01)
    u0 = grid[:, None]
    u1 = grid[None, :]
    x1 = a * x0 + b * u0
    x2 = a * x1 + b * u1
    total = q * x0**2 + r * u0**2 + q * x1**2 + r * u1**2 + q_n * x2**2
    grid_min = float(total.min())
    elapsed = time.perf_counter() - start
    ok = policy_cost <= grid_min + 1e-4 and elapsed < 5.0
    assert _verdict(
        2, ok,
        f"policy cost {policy_cost:.6f} vs grid minimum {grid_min:.6f} "
        f"(margin 1e-4), {elapsed:.2f} s (budget 5 s)",
    )


def _fd_jacobian(func, point, h_scale=1e-5):
    point = np.asarray(point, dtype=float)
    base = np.asarray(func(point), dtype=float)
    jac = np.empty((base.size, point.size))
    for i in range(point.size):
        h = h_scale * max(1.0, abs(point[i]))
        up, down = point.copy(), point.copy()
        up[i] += h
        down[i] -= h
        jac[:, i] = (np.asarray(func(up)) - np.asarray(func(down))) / (2.0 * h)
    return jac


def _fd_gradient(func, point, h_scale=1e-6):
    point = np.asarray(point, dtype=float)
    grad = np.empty(point.size)
    for i in range(point.size):
        h = h_scale * max(1.0, abs(point[i]))
        up, down = point.copy(), point.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (func(up) - func(down)) / (2.0 * h)
    return grad


def _norm_rel(got, ref):
    return float(
        np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1.0)
    )


def test_criterion_03_derivatives_match_finite_differences():
    """100 random arm states: dynamics Jacobians and cost gradients must
    agree with independent central differences to 1e-5 relative (norm-wise,
    with a unit floor for near-zero references), in under 10 s."""
    arm = TwoLinkArm(dt=0.01)
    cost = CostSpec(
        terms=(
            TerminalDistance(target=(0.3, 0.3), weight=1000.0,
                             space="end_effector"),
            TerminalStability(weight=10.0),
            ControlEffort(weight=1e-4),
            JointAcceleration(weight=1e-5),
        ),
        horizon=10,
    )
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        x = np.concatenate([
            rng.uniform(-np.pi, np.pi, 2),
            rng.uniform(-3.0, 3.0, 2),
            rng.uniform(0.0, 1.0, 2),
            rng.uniform(-5.0, 5.0, 2),
        ])
        u = rng.uniform(-1.0, 1.0, 2)

        a_mat, b_mat = linearize(arm, x, u)
        a_fd = _fd_jacobian(lambda s: arm.step_deterministic(s, u), x)
        b_fd = _fd_jacobian(lambda c: arm.step_deterministic(x, c), u)
        worst = max(worst, _norm_rel(a_mat, a_fd), _norm_rel(b_mat, b_fd))

        quad = quadratize(cost, x, u, 3, arm)
        lx_fd = _fd_gradient(lambda s: stage_cost(cost, s, u, 3, arm), x)
        lu_fd = _fd_gradient(lambda c: stage_cost(cost, x, c, 3, arm), u)
        worst = max(worst, _norm_rel(quad.lx, lx_fd), _norm_rel(quad.lu, lu_fd))

        term = quadratize(cost, x, None, 10, arm)
        tx_fd = _fd_gradient(lambda s: stage_cost(cost, s, None, 10, arm), x)
        worst = max(worst, _norm_rel(term.lx, tx_fd))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 10.0
    assert _verdict(
        3, ok,
        f"100 points, worst derivative mismatch {worst:.2e} (tol 1e-5), "
        f"{elapsed:.2f} s (budget 10 s)",
    )


def test_criterion_04_endpoint_scatter_grows_with_noise():
    """Signal-dependent noise levels 0.1/0.2/0.4, 10^4 rollouts each: the
    empirical endpoint spread must increase strictly, in under 30 s."""
    start = time.perf_counter()
    res = lqg_reach(sigma_us=(0.1, 0.2, 0.4), n_trials=10000)
    elapsed = time.perf_counter() - start
    stds = [row["endpoint_std"] for row in res["rows"]]
    converged = all(row["converged"] for row in res["rows"])
    ok = converged and stds[0] < stds[1] < stds[2] and elapsed < 30.0
    assert _verdict(
        4, ok,
        "endpoint stds "
        + " < ".join(f"{s:.5f}" for s in stds)
        + f" over 10000 trials each, {elapsed:.1f} s (budget 30 s)",
    )


def test_criterion_05_movement_time_is_fitts_linear():
    """Receding-horizon point-mass taps over 6 difficulty levels in
    [1.5, 5], 20 trials each: movement time must regress on difficulty with
    R^2 >= 0.9 and positive slope, in under 5 min."""
    start = time.perf_counter()
    res = fitts_sweep(mode="mpc")
    elapsed = time.perf_counter() - start
    fit = res["fit"]
    ok = fit.r_squared >= 0.9 and fit.slope > 0.0 and elapsed < 300.0
    assert _verdict(
        5, ok,
        f"R^2 {fit.r_squared:.3f} (>= 0.9), slope {fit.slope:.3f} s/bit "
        f"(> 0), {elapsed:.0f} s (budget 300 s)",
    )


def test_criterion_06_reaches_are_bell_shaped(suite_records):
    """Every converged reach in the regression suite: exactly one velocity
    peak, peak time between 30% and 70% of movement time, exactly one
    smoothed acceleration zero crossing."""
    assert len(suite_records) >= 11
    failures = []
    for rec in suite_records:
        if not rec["converged"]:
            failures.append(f"{rec['name']} did not converge")
            continue
        p = rec["profile"]
        if p.n_velocity_peaks != 1:
            failures.append(f"{rec['name']}: {p.n_velocity_peaks} peaks")
        if not (0.3 <= p.time_to_peak_ratio <= 0.7):
            failures.append(
                f"{rec['name']}: peak ratio {p.time_to_peak_ratio:.3f}"
            )
        if p.n_accel_zero_crossings != 1:
            failures.append(
                f"{rec['name']}: {p.n_accel_zero_crossings} crossings"
            )
    ok = not failures
    assert _verdict(
        6, ok,
        f"{len(suite_records)} suite reaches, single-peak 0.3-0.7 ratio, "
        "one crossing each" if ok else "; ".join(failures),
    )


def test_criterion_07_perturbed_arm_reaches_recover():
    """A 5 cm end-effector displacement halfway through the two-link reach:
    all 10 seeded runs must still acquire the target, in under 2 min."""
    start = time.perf_counter()
    res = mpc_perturb(n_runs=10, perturbation_size=0.05)
    elapsed = time.perf_counter() - start
    ok = res["n_reached"] == 10 and elapsed < 120.0
    assert _verdict(
        7, ok,
        f"{res['n_reached']}/10 perturbed reaches recovered, "
        f"{elapsed:.0f} s (budget 120 s)",
    )


def test_criterion_08_circle_period_analytic():
    """Drag-free, gravity-free circle: the timing-law period must match the
    closed form 2 pi sqrt(m r / (k_r r_max)) within 1%, in under 1 s."""
    params = TrapParams(gravity=0.0, drag=0.0)
    radius = 0.01
    start = time.perf_counter()
    law, _ = topp_solve(
        PathSpec(make_shape("circle", radius=radius)), params, safety_margin=0.0
    )
    elapsed = time.perf_counter() - start
    expected = 2.0 * np.pi * np.sqrt(
        params.mass * radius / (params.stiffness_radial * params.capture_radius)
    )
    rel = abs(law.period - expected) / expected
    ok = rel <= 0.01 and elapsed < 1.0
    assert _verdict(
        8, ok,
        f"period {law.period:.6f} s vs analytic {expected:.6f} s, "
        f"relative error {rel:.2e} (tol 1e-2), {elapsed:.2f} s (budget 1 s)",
    )


def test_criterion_09_library_shapes_render_safely():
    """Cardioid and rounded-square at default trap parameters: period at
    most 0.1 s, no sample over the offset cap, and no escape across 10
    rendered cycles, in under 30 s."""
    params = TrapParams()
    start = time.perf_counter()
    details = []
    ok = True
    for shape in ("cardioid", "rounded-square"):
        run = levitate_run(shape=shape, trap_params=params, cycles=10)
        report = run.report()
        times, pos, vel, acc = run.timing_law.particle_schedule(10000.0)
        offsets = np.linalg.norm(
            required_trap(pos, vel, acc, params) - pos, axis=1
        )
        violations = int(np.sum(offsets > params.capture_radius))
        ok = ok and (
            report["period"] <= 0.1
            and report["feasible"]
            and violations == 0
            and not report["escaped"]
        )
        details.append(
            f"{shape}: period {report['period']:.4f} s, "
            f"{violations} violations, escaped={report['escaped']}"
        )
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 30.0
    assert _verdict(
        9, ok, "; ".join(details) + f", {elapsed:.1f} s (budget 30 s)"
    )


def test_criterion_10_analysis_fits_recover_known_laws():
    """fitts_fit must recover a planted affine law to 1e-9; power_law_fit
    must recover the -1/3 exponent of exact power-law motion to 1e-6."""
    trials = []
    for dist in (0.05, 0.1, 0.2):
        for width in (0.01, 0.02):
            ident = np.log2(dist / width + 1.0)
            trials.append(
                TrialRecord(distance=dist, width=width,
                            movement_time=0.25 + 0.15 * ident)
            )
    fit = fitts_fit(trials)
    affine_err = max(abs(fit.slope - 0.15), abs(fit.intercept - 0.25))

    a_ax, b_ax, k = 0.1, 0.05, 0.1
    theta = np.linspace(0.0, 2.0 * np.pi, 200001)
    ds_dtheta = np.sqrt((a_ax * np.sin(theta)) ** 2 + (b_ax * np.cos(theta)) ** 2)
    curvature = a_ax * b_ax / ds_dtheta**3
    speed = k * curvature ** (-1.0 / 3.0)
    t_of_theta = cumulative_trapezoid(ds_dtheta / speed, theta, initial=0.0)
    invert = CubicSpline(t_of_theta, theta)
    times = np.arange(0.0, t_of_theta[-1], 1e-4)
    th = invert(times)
    positions = np.column_stack([a_ax * np.cos(th), b_ax * np.sin(th)])
    power = power_law_fit(positions, dt=1e-4)
    slope_err = abs(power.slope + 1.0 / 3.0)

    ok = affine_err <= 1e-9 and slope_err <= 1e-6
    assert _verdict(
        10, ok,
        f"affine recovery error {affine_err:.2e} (tol 1e-9), power-law "
        f"slope error {slope_err:.2e} (tol 1e-6)",
    )


def test_criterion_11_reruns_are_byte_identical(tmp_path):
    """Re-running a config with the same seed must reproduce every output
    file byte for byte."""
    configs = (
        {"kind": "lqg-reach", "sigma_us": [0.1, 0.2], "n_trials": 200,
         "horizon": 40},
        {"kind": "mpc-reach", "plant": "point-mass-1d",
         "planning_horizon": 40, "noise": {"signal_dependent_scale": 0.2}},
    )
    ok = True
    details = []
    for i, raw in enumerate(configs):
        cfg = validate_config(dict(raw))
        dirs = [tmp_path / f"cfg{i}-run{j}" for j in range(2)]
        outputs = [run_experiment(cfg, str(d)) for d in dirs]
        same = outputs[0] == outputs[1] and all(
            (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
            for name in outputs[0]
        )
        ok = ok and same
        details.append(
            f"{raw['kind']}: {len(outputs[0])} files "
            + ("identical" if same else "DIFFER")
        )
    assert _verdict(11, ok, "; ".join(details))


def test_acceptance_report_complete():
    """Every numbered criterion above must exist exactly once."""
    names = [name for name in globals() if name.startswith("test_criterion_")]
    numbers = sorted(int(name.split("_")[2]) for name in names)
    assert numbers == list(range(1, 12))
