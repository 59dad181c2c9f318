"""Analysis oracles: affine Fitts recovery, exact power-law motion,
and closed-form velocity profiles."""

import numpy as np
import pytest
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from ocsim.analysis import (
    TrialRecord,
    fitts_fit,
    power_law_fit,
    velocity_profile_metrics,
)


def _affine_trials(a, b, scale=1.0):
    trials = []
    for dist in (0.05, 0.1, 0.2):
        for width in (0.01, 0.02):
            ident = np.log2(dist / width + 1.0)
            trials.append(
                TrialRecord(
                    distance=dist * scale,
                    width=width * scale,
                    movement_time=a + b * ident,
                )
            )
    return trials


def _ellipse_powerlaw_trajectory(exponent, dt=1e-4, k=0.1):
    """Positions on an ellipse traced with v = k * curvature**exponent.

    The phase-to-time map is integrated on a dense grid and inverted with a
    spline, so the sampled motion obeys the speed law to near machine
    precision.
    """
    a_ax, b_ax = 0.1, 0.05
    theta = np.linspace(0.0, 2.0 * np.pi, 200001)
    ds_dtheta = np.sqrt((a_ax * np.sin(theta)) ** 2 + (b_ax * np.cos(theta)) ** 2)
    curvature = a_ax * b_ax / ds_dtheta**3
    speed = k * curvature**exponent
    t_of_theta = cumulative_trapezoid(ds_dtheta / speed, theta, initial=0.0)
    invert = CubicSpline(t_of_theta, theta)
    times = np.arange(0.0, t_of_theta[-1], dt)
    th = invert(times)
    return np.column_stack([a_ax * np.cos(th), b_ax * np.sin(th)])


def _min_jerk(distance=0.15, duration=1.0, dt=0.01):
    tau = np.linspace(0.0, 1.0, int(round(duration / dt)) + 1)
    return distance * (10 * tau**3 - 15 * tau**4 + 6 * tau**5)


def test_fitts_fit_recovers_affine_law():
    fit = fitts_fit(_affine_trials(a=0.3, b=0.12))
    assert abs(fit.slope - 0.12) < 1e-9
    assert abs(fit.intercept - 0.3) < 1e-9
    assert fit.r_squared > 1.0 - 1e-12
    assert fit.n_points == 6


def test_fitts_fit_scale_invariant():
    base = fitts_fit(_affine_trials(a=0.3, b=0.12))
    scaled = fitts_fit(_affine_trials(a=0.3, b=0.12, scale=1000.0))
    assert scaled.slope == pytest.approx(base.slope, abs=1e-12)
    assert scaled.intercept == pytest.approx(base.intercept, abs=1e-12)


def test_fitts_fit_rejects_degenerate_inputs():
    with pytest.raises(ValueError, match="at least 2"):
        fitts_fit([TrialRecord(distance=0.1, width=0.01, movement_time=0.5)])
    same_id = [
        TrialRecord(distance=0.1, width=0.01, movement_time=0.5),
        TrialRecord(distance=0.2, width=0.02, movement_time=0.6),
    ]
    with pytest.raises(ValueError, match="degenerate"):
        fitts_fit(same_id)


def test_trial_record_index_of_difficulty():
    assert TrialRecord(0.01, 0.01, 1.0).index_of_difficulty == pytest.approx(1.0)
    assert TrialRecord(0.03, 0.01, 1.0).index_of_difficulty == pytest.approx(2.0)
    with pytest.raises(ValueError):
        TrialRecord(distance=-0.1, width=0.01, movement_time=0.5)
    with pytest.raises(ValueError):
        TrialRecord(distance=0.1, width=0.01, movement_time=0.0)


def test_power_law_exact_motion_recovers_one_third():
    positions = _ellipse_powerlaw_trajectory(exponent=-1.0 / 3.0)
    fit = power_law_fit(positions, dt=1e-4)
    assert abs(fit.slope + 1.0 / 3.0) < 1e-6
    assert fit.r_squared > 1.0 - 1e-9


def test_power_law_constant_speed_has_zero_slope():
    positions = _ellipse_powerlaw_trajectory(exponent=0.0)
    fit = power_law_fit(positions, dt=1e-4)
    assert abs(fit.slope) < 1e-4


def test_power_law_accepts_planar_3d_input():
    xy = _ellipse_powerlaw_trajectory(exponent=-1.0 / 3.0)
    # Embed in a tilted plane; curvature is invariant to the rigid motion.
    basis = np.array([[1.0, 0.0, 0.0], [0.0, np.sqrt(0.5), np.sqrt(0.5)]])
    xyz = xy @ basis + np.array([0.01, -0.02, 0.03])
    fit = power_law_fit(xyz, dt=1e-4)
    assert abs(fit.slope + 1.0 / 3.0) < 1e-6


def test_power_law_rejects_bad_inputs():
    xy = _ellipse_powerlaw_trajectory(exponent=-1.0 / 3.0)
    with pytest.raises(ValueError, match="dt"):
        power_law_fit(xy, dt=0.0)
    with pytest.raises(ValueError, match="window"):
        power_law_fit(xy, dt=1e-4, window=4)
    helix = np.column_stack(
        [np.cos(np.linspace(0, 20, 500)), np.sin(np.linspace(0, 20, 500)),
         np.linspace(0, 1, 500)]
    )
    with pytest.raises(ValueError, match="planar"):
        power_law_fit(helix, dt=0.01)
    t = np.linspace(0.0, 1.0, 300)
    line = np.column_stack([t, 2.0 * t])
    with pytest.raises(ValueError, match="insufficient valid samples"):
        power_law_fit(line, dt=0.01)
    angle = np.linspace(0.0, 2.0 * np.pi, 1000)
    circle = 0.05 * np.column_stack([np.cos(angle), np.sin(angle)])
    with pytest.raises(ValueError, match="degenerate regressor"):
        power_law_fit(circle, dt=0.01)


def test_profile_min_jerk_is_single_peaked():
    positions = _min_jerk()
    metrics = velocity_profile_metrics(positions, dt=0.01)
    assert metrics.n_velocity_peaks == 1
    assert metrics.time_to_peak_ratio == pytest.approx(0.5, abs=1e-12)
    assert metrics.n_accel_zero_crossings == 1
    # Peak speed of the unit-time profile is 1.875 * distance.
    assert metrics.peak_speed == pytest.approx(1.875 * 0.15, rel=1e-3)


def test_profile_counts_two_submovements():
    first = _min_jerk(distance=0.075, duration=0.5)
    hold = np.full(10, first[-1])
    second = first[-1] + _min_jerk(distance=0.075, duration=0.5)
    positions = np.concatenate([first, hold, second])
    metrics = velocity_profile_metrics(positions, dt=0.01)
    assert metrics.n_velocity_peaks == 2
    assert metrics.n_accel_zero_crossings == 3


def test_profile_ignores_subthreshold_ripple():
    t = np.linspace(0.0, 1.0, 201)
    speed = np.sin(np.pi * t) ** 2 * (1.0 + 0.03 * np.sin(2.0 * np.pi * 6.0 * t))
    positions = np.concatenate([[0.0], np.cumsum(speed[:-1] + speed[1:]) * 0.5 * 0.005])
    metrics = velocity_profile_metrics(positions, dt=0.005)
    assert metrics.n_velocity_peaks == 1


def test_profile_plateau_counts_once():
    t = np.linspace(0.0, 1.0, 201)
    speed = np.clip(np.minimum(t / 0.2, (1.0 - t) / 0.2), 0.0, 1.0)
    positions = np.concatenate([[0.0], np.cumsum(speed[:-1] + speed[1:]) * 0.5 * 0.005])
    metrics = velocity_profile_metrics(positions, dt=0.005)
    assert metrics.n_velocity_peaks == 1
    assert metrics.n_accel_zero_crossings == 1


def test_profile_validation():
    with pytest.raises(ValueError, match="at least 10"):
        velocity_profile_metrics(np.zeros((5, 1)), dt=0.01)
    with pytest.raises(ValueError, match="dt"):
        velocity_profile_metrics(np.zeros((20, 1)) + np.arange(20)[:, None], dt=-1.0)
    with pytest.raises(ValueError, match="degenerate"):
        velocity_profile_metrics(np.zeros((20, 1)), dt=0.01)
