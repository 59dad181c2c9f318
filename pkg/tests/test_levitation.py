"""Trap timing-law solver: analytic circle oracle, feasibility, rendering."""

import numpy as np
import pytest

from ocsim.levitation import (
    TrapParams,
    required_trap,
    simulate_render,
    topp_solve,
)
from ocsim.shapes import PathSpec, make_shape


def _circle_path(radius):
    return PathSpec(make_shape("circle", radius=radius))


def circle_period_analytic(radius, params):
    """Minimum circle period with no gravity and no drag.

    At constant speed the only offset is centripetal, m * v^2 / (r * k_r),
    so riding the full cap gives T = 2 pi sqrt(m r / (k_r cap)).
    """
    cap = params.capture_radius
    return 2.0 * np.pi * np.sqrt(params.mass * radius / (params.stiffness_radial * cap))


def test_circle_period_matches_analytic():
    params = TrapParams(gravity=0.0, drag=0.0)
    law, trap = topp_solve(_circle_path(0.01), params, safety_margin=0.0)
    expected = circle_period_analytic(0.01, params)
    assert law.period == pytest.approx(expected, rel=1e-6)
    assert trap.feasible


def test_radius_doubling_scales_period_sqrt2():
    params = TrapParams(gravity=0.0, drag=0.0)
    law1, _ = topp_solve(_circle_path(0.01), params, safety_margin=0.0)
    law2, _ = topp_solve(_circle_path(0.02), params, safety_margin=0.0)
    assert law2.period / law1.period == pytest.approx(np.sqrt(2.0), rel=1e-6)


def test_gravity_sag_lengthens_period():
    """Static sag spends part of the offset budget, so the same circle must
    be traced more slowly under gravity."""
    quiet = TrapParams(gravity=0.0, drag=0.0)
    heavy = TrapParams(drag=0.0)
    law_quiet, _ = topp_solve(_circle_path(0.01), quiet, safety_margin=0.0)
    law_heavy, _ = topp_solve(_circle_path(0.01), heavy, safety_margin=0.0)
    assert law_heavy.period > law_quiet.period


def test_grid_refinement_converges():
    params = TrapParams()
    path = PathSpec(make_shape("ellipse", semi_major=0.012, semi_minor=0.006))
    coarse, _ = topp_solve(path, params, n_grid=250)
    fine, _ = topp_solve(path, params, n_grid=2000)
    assert abs(coarse.period - fine.period) / fine.period < 0.02


def test_offset_cap_respected_on_curved_shapes():
    params = TrapParams()
    margin = 0.02
    cap = params.capture_radius * (1.0 - margin)
    for shape in (
        make_shape("ellipse", semi_major=0.012, semi_minor=0.006),
        make_shape("rounded-square", side=0.015, corner_radius=0.003),
        make_shape("cardioid", scale=0.004),
    ):
        law, trap = topp_solve(PathSpec(shape), params, safety_margin=margin)
        assert trap.feasible
        # The exported schedule samples between solver grid nodes, so allow
        # a small interpolation excess over the solver's own cap.
        assert trap.peak_offset <= cap * 1.01
        times, pos, vel, acc = law.particle_schedule(10000.0)
        offsets = np.linalg.norm(required_trap(pos, vel, acc, params) - pos, axis=1)
        assert offsets.max() <= cap * 1.01


def test_timing_law_times_consistent():
    params = TrapParams()
    law, trap = topp_solve(_circle_path(0.01), params)
    nodes = law.node_times()
    assert nodes[0] == 0.0
    assert nodes[-1] == pytest.approx(law.period, rel=1e-12)
    assert np.all(np.diff(nodes) > 0)
    assert len(trap.times) == int(np.ceil(law.period * 10000.0))
    assert np.all(np.diff(trap.times) > 0)


def test_state_at_wraps_periodically():
    params = TrapParams()
    law, _ = topp_solve(_circle_path(0.01), params)
    s0, v0, _ = law.state_at(0.123 * law.period)
    s1, v1, _ = law.state_at(1.123 * law.period)
    assert s0 == pytest.approx(s1, abs=1e-12)
    assert v0 == pytest.approx(v1, abs=1e-9)


def test_render_holds_particle_on_circle():
    params = TrapParams()
    law, trap = topp_solve(_circle_path(0.01), params)
    report = simulate_render(law, trap, params, cycles=5, warmup_cycles=2)
    assert not report.escaped
    assert report.escape_time is None
    assert report.peak_trap_offset <= params.capture_radius
    assert report.rms_deviation < 0.2 * params.capture_radius
    assert len(report.per_cycle_drift) == 4
    # Per-cycle drift settles after warmup instead of growing.
    assert report.per_cycle_drift[-1] < 0.1 * params.capture_radius


def test_infeasible_path_raises_value_error():
    # A gravity sag beyond the capture radius means no feasible speed at all.
    params = TrapParams(gravity=500.0)
    with pytest.raises(ValueError, match="infeasible"):
        topp_solve(_circle_path(0.01), params)


def test_topp_argument_validation():
    params = TrapParams()
    with pytest.raises(ValueError):
        topp_solve(_circle_path(0.01), params, n_grid=50)
    with pytest.raises(ValueError):
        topp_solve(_circle_path(0.01), params, safety_margin=0.5)


def test_trap_params_validation():
    with pytest.raises(ValueError):
        TrapParams(mass=0.0)
    with pytest.raises(ValueError):
        TrapParams(stiffness_radial=-1.0)
    with pytest.raises(ValueError):
        TrapParams(drag=-1e-9)


def test_required_trap_static_sag():
    params = TrapParams()
    p = np.array([0.0, 0.0, 0.0])
    trap = required_trap(p, np.zeros(3), np.zeros(3), params)
    sag = params.mass * params.gravity / params.stiffness_axial
    assert trap == pytest.approx([0.0, 0.0, sag])
