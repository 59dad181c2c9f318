"""Cost terms: hand-computed totals, gradient checks, config round-trips."""

import numpy as np
import pytest

from ocsim.costs import (
    COST_KINDS,
    ControlEffort,
    CostSpec,
    JointAcceleration,
    TerminalDistance,
    TerminalStability,
    TimeConstant,
    cost_terms_from_config,
    evaluate,
    quadratize,
    stage_cost,
)
from ocsim.plants import PointMass1D, TwoLinkArm, forward_kinematics, rollout


def _point_mass_traj():
    plant = PointMass1D()
    controls = np.array([[1.0], [2.0], [-1.0]])
    return plant, rollout(plant, np.zeros(2), controls)


def test_control_effort_hand_total():
    plant, traj = _point_mass_traj()
    spec = CostSpec(terms=(ControlEffort(weight=2.0),), horizon=3)
    assert evaluate(spec, traj, plant) == pytest.approx(2.0 * (1 + 4 + 1), abs=1e-15)


def test_terminal_distance_hand_total():
    plant, traj = _point_mass_traj()
    spec = CostSpec(terms=(TerminalDistance(target=(0.5,), weight=3.0),), horizon=3)
    expected = 3.0 * (traj.states[-1, 0] - 0.5) ** 2
    assert evaluate(spec, traj, plant) == pytest.approx(expected, rel=1e-14)


def test_terminal_stability_hand_total():
    plant, traj = _point_mass_traj()
    spec = CostSpec(terms=(TerminalStability(weight=5.0),), horizon=3)
    expected = 5.0 * traj.states[-1, 1] ** 2
    assert evaluate(spec, traj, plant) == pytest.approx(expected, rel=1e-14)


def test_time_constant_counts_steps():
    plant, traj = _point_mass_traj()
    spec = CostSpec(terms=(TimeConstant(weight=0.7),), horizon=3)
    assert evaluate(spec, traj, plant) == pytest.approx(0.7 * 3, rel=1e-15)


def test_joint_acceleration_hand_total():
    plant, traj = _point_mass_traj()
    spec = CostSpec(terms=(JointAcceleration(weight=1.5),), horizon=3)
    vel = traj.states[:, 1]
    acc = np.diff(vel) / traj.dt
    assert evaluate(spec, traj, plant) == pytest.approx(
        1.5 * float(np.sum(acc**2)), rel=1e-12
    )


def test_end_effector_terminal_distance():
    arm = TwoLinkArm()
    x = np.zeros(8)
    x[0:2] = [0.4, 0.9]
    pos, _ = forward_kinematics(arm, x[0:2])
    target = pos + np.array([0.02, -0.01])
    spec = CostSpec(
        terms=(TerminalDistance(target=tuple(target), weight=4.0, space="end_effector"),),
        horizon=1,
    )
    got = stage_cost(spec, x, None, 1, arm)
    assert got == pytest.approx(4.0 * float(np.sum((pos - target) ** 2)), rel=1e-12)


def test_stage_cost_sums_to_evaluate():
    plant, traj = _point_mass_traj()
    spec = CostSpec(
        terms=(
            TerminalDistance(target=(0.3,), weight=10.0),
            TerminalStability(weight=2.0),
            ControlEffort(weight=0.5),
            JointAcceleration(weight=0.1),
            TimeConstant(weight=0.2),
        ),
        horizon=3,
    )
    total = sum(
        stage_cost(spec, traj.states[k], traj.controls[k], k, plant)
        for k in range(3)
    ) + stage_cost(spec, traj.states[-1], None, 3, plant)
    assert total == pytest.approx(evaluate(spec, traj, plant), rel=1e-12)


def test_every_term_is_nonnegative_and_linear_in_weight():
    plant, traj = _point_mass_traj()
    for kind, cls in COST_KINDS.items():
        kwargs = {"weight": 1.3}
        if kind == "terminal-distance":
            kwargs["target"] = (0.2,)
        one = evaluate(CostSpec(terms=(cls(**kwargs),), horizon=3), traj, plant)
        kwargs["weight"] = 2.6
        two = evaluate(CostSpec(terms=(cls(**kwargs),), horizon=3), traj, plant)
        assert one >= 0.0
        assert two == pytest.approx(2.0 * one, rel=1e-12)


def _fd_gradients(spec, x, u, k, plant, h=1e-6):
    n, m = plant.state_dim, plant.control_dim
    gx = np.zeros(n)
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = h
        gx[j] = (
            stage_cost(spec, x + dx, u, k, plant)
            - stage_cost(spec, x - dx, u, k, plant)
        ) / (2.0 * h)
    gu = np.zeros(m)
    if k < spec.horizon:
        for j in range(m):
            du = np.zeros(m)
            du[j] = h
            gu[j] = (
                stage_cost(spec, x, u + du, k, plant)
                - stage_cost(spec, x, u - du, k, plant)
            ) / (2.0 * h)
    return gx, gu


def test_quadratize_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    arm = TwoLinkArm()
    pm = PointMass1D()
    spec_arm = CostSpec(
        terms=(
            TerminalDistance(target=(0.3, 0.3), weight=7.0, space="end_effector"),
            TerminalStability(weight=2.0),
            ControlEffort(weight=0.4),
            JointAcceleration(weight=0.05),
        ),
        horizon=4,
    )
    spec_pm = CostSpec(
        terms=(
            TerminalDistance(target=(0.2,), weight=5.0),
            ControlEffort(weight=1.0),
        ),
        horizon=4,
    )
    for plant, spec in ((arm, spec_arm), (pm, spec_pm)):
        n, m = plant.state_dim, plant.control_dim
        for _ in range(12):
            x = rng.normal(scale=0.4, size=n)
            u = rng.normal(scale=0.3, size=m)
            k = int(rng.integers(0, spec.horizon + 1))
            q = quadratize(spec, x, u, k, plant)
            gx, gu = _fd_gradients(spec, x, u, k, plant)
            assert np.allclose(q.lx, gx, rtol=1e-4, atol=1e-6)
            if k < spec.horizon:
                assert np.allclose(q.lu, gu, rtol=1e-4, atol=1e-6)


def test_quadratize_hessian_blocks_are_symmetric_psd():
    arm = TwoLinkArm()
    spec = CostSpec(
        terms=(
            TerminalDistance(target=(0.3, 0.3), weight=7.0, space="end_effector"),
            ControlEffort(weight=0.4),
            JointAcceleration(weight=0.05),
        ),
        horizon=2,
    )
    rng = np.random.default_rng(4)
    for k in (0, 1, 2):
        x = rng.normal(scale=0.4, size=8)
        u = rng.normal(scale=0.3, size=2)
        q = quadratize(spec, x, u, k, arm)
        assert np.allclose(q.lxx, q.lxx.T, atol=1e-10)
        assert np.all(np.linalg.eigvalsh(q.lxx) > -1e-10)
        if k < 2:
            assert np.allclose(q.luu, q.luu.T, atol=1e-10)
            assert np.all(np.linalg.eigvalsh(q.luu) > -1e-10)


def test_quadratic_terms_expand_exactly():
    """For purely quadratic terms the expansion reproduces the cost exactly."""
    pm = PointMass1D()
    spec = CostSpec(
        terms=(TerminalDistance(target=(0.4,), weight=3.0),),
        horizon=1,
    )
    x = np.array([0.1, -0.2])
    q = quadratize(spec, x, None, 1, pm)
    rng = np.random.default_rng(0)
    for _ in range(5):
        dx = rng.normal(scale=0.05, size=2)
        pred = q.l + q.lx @ dx + 0.5 * dx @ q.lxx @ dx
        true = stage_cost(spec, x + dx, None, 1, pm)
        assert pred == pytest.approx(true, rel=1e-10, abs=1e-12)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(terms=(), horizon=3)
    with pytest.raises(ValueError):
        CostSpec(terms=(ControlEffort(weight=0.0),), horizon=3)
    with pytest.raises(ValueError):
        ControlEffort(weight=-1.0)
    with pytest.raises(ValueError):
        TerminalDistance(target=(0.1,), weight=1.0, space="configuration")


def test_cost_terms_from_config_round_trip():
    entries = [
        {"kind": "terminal-distance", "target": [0.15], "weight": 300.0},
        {"kind": "terminal-stability", "weight": 10.0},
        {"kind": "control-effort", "weight": 1e-4},
    ]
    terms = cost_terms_from_config(entries)
    assert isinstance(terms[0], TerminalDistance)
    assert terms[0].weight == 300.0
    assert np.allclose(terms[0].target, [0.15])
    assert isinstance(terms[1], TerminalStability)
    assert isinstance(terms[2], ControlEffort)


def test_cost_terms_from_config_errors_name_the_field():
    with pytest.raises(ValueError, match=r"cost\[0\].kind"):
        cost_terms_from_config([{"kind": "frobnicate"}])
    with pytest.raises(ValueError, match=r"cost\[0\].target"):
        cost_terms_from_config([{"kind": "terminal-distance"}])
    with pytest.raises(ValueError, match=r"cost\[1\]"):
        cost_terms_from_config(
            [{"kind": "control-effort"}, {"kind": "control-effort", "target": [1.0]}]
        )
