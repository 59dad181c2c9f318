"""Movement regularity analysis: Fitts regression, speed-curvature power
law, and velocity-profile shape metrics.

All routines are pure functions of sampled trajectories. Derivatives are
taken with central finite differences and a short moving-average smoothing
window, which is robust at 100 Hz trajectories without distorting peaks.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrialRecord",
    "FitResult",
    "ProfileMetrics",
    "fitts_fit",
    "power_law_fit",
    "velocity_profile_metrics",
]


@dataclass(eq=False)
class TrialRecord:
    """One aimed-movement trial: task condition plus measured outcome."""

    distance: float
    width: float
    movement_time: float
    endpoint: np.ndarray | None = None
    trajectory: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.distance) and self.distance > 0.0):
            raise ValueError("distance must be positive and finite")
        if not (np.isfinite(self.width) and self.width > 0.0):
            raise ValueError("width must be positive and finite")
        if not (np.isfinite(self.movement_time) and self.movement_time > 0.0):
            raise ValueError("movement_time must be positive and finite")
        if self.endpoint is not None:
            self.endpoint = np.asarray(self.endpoint, dtype=float)
        if self.trajectory is not None:
            self.trajectory = np.asarray(self.trajectory, dtype=float)

    @property
    def index_of_difficulty(self):
        """Shannon formulation: log2(D / W + 1)."""
        return float(np.log2(self.distance / self.width + 1.0))


@dataclass(eq=False)
class FitResult:
    """Ordinary least squares line y = slope * x + intercept."""

    slope: float
    intercept: float
    r_squared: float
    n_points: int


def _ols_line(x, y):
    """Least squares line fit returning (slope, intercept, r_squared).

    r_squared is clamped to 0 when the response has no variance (the fit
    explains nothing, and the usual ratio would be 0/0).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    assert x.shape == y.shape and x.ndim == 1
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(np.dot(residuals, residuals))
    centered = y - y.mean()
    ss_tot = float(np.dot(centered, centered))
    if ss_tot <= 1e-300:
        r_squared = 0.0
    else:
        r_squared = max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(intercept), r_squared


def fitts_fit(trials):
    """Fit movement time against index of difficulty: MT = a + b * ID.

    Uses the Shannon ID formulation, log2(D / W + 1), which is dimensionless,
    so rescaling all lengths leaves the fit unchanged. Requires at least two
    distinct difficulty values, otherwise the regressor is degenerate.
    """
    trials = list(trials)
    if len(trials) < 2:
        raise ValueError("need at least 2 trials to fit a line")
    ids = np.array([t.index_of_difficulty for t in trials])
    times = np.array([t.movement_time for t in trials])
    if ids.max() - ids.min() < 1e-12:
        raise ValueError(
            "degenerate regressor: all trials share one index of difficulty"
        )
    slope, intercept, r_squared = _ols_line(ids, times)
    return FitResult(slope, intercept, r_squared, len(trials))


def _moving_average(values, window):
    """Columnwise moving average, 'valid' mode (no edge padding)."""
    kernel = np.ones(window) / window
    if values.ndim == 1:
        return np.convolve(values, kernel, mode="valid")
    return np.stack(
        [np.convolve(values[:, j], kernel, mode="valid") for j in range(values.shape[1])],
        axis=1,
    )


def _planar_coordinates(positions):
    """Return an (n, 2) view of a planar trajectory.

    3-column input is accepted when the points are coplanar (checked via
    SVD of the centered cloud); the trajectory is then expressed in an
    orthonormal basis of its own plane. Curvature is invariant to that
    rigid change of coordinates.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] not in (2, 3):
        raise ValueError("positions must be an (n, 2) or (n, 3) array")
    if positions.shape[1] == 2:
        return positions
    centered = positions - positions.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[2] > 1e-8 * max(svals[0], 1e-300):
        raise ValueError("trajectory is not planar; cannot compute signed curvature")
    return centered @ vt[:2].T


def power_law_fit(positions, dt, window=5):
    """Regress log speed on log curvature for a planar trajectory.

    Velocity comes from central differences of position smoothed over
    `window` samples; acceleration from central differences of that
    velocity. Samples too slow for a stable tangent (speed <= 1e-6) or too
    straight for a stable curvature (kappa <= 1e-6) are excluded. Motion
    generated exactly as v = k * kappa**(-1/3) fits slope -1/3.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    xy = _planar_coordinates(positions)
    if len(xy) < 2 * window + 8:
        raise ValueError("insufficient valid samples: trajectory too short")
    velocity = _moving_average(np.gradient(xy, dt, axis=0), window)
    accel = np.gradient(velocity, dt, axis=0)
    # Double edge trim: both the one-sided gradient ends and the samples
    # whose smoothing window touched them.
    trim = window
    velocity = velocity[trim:-trim]
    accel = accel[trim:-trim]
    speed = np.linalg.norm(velocity, axis=1)
    cross = velocity[:, 0] * accel[:, 1] - velocity[:, 1] * accel[:, 0]
    valid = speed > 1e-6
    curvature = np.zeros_like(speed)
    curvature[valid] = np.abs(cross[valid]) / speed[valid] ** 3
    valid &= curvature > 1e-6
    if int(valid.sum()) < 20:
        raise ValueError(
            f"insufficient valid samples: {int(valid.sum())} < 20 after guards"
        )
    log_kappa = np.log(curvature[valid])
    log_speed = np.log(speed[valid])
    if log_kappa.max() - log_kappa.min() < 1e-9:
        raise ValueError("degenerate regressor: curvature is constant on this path")
    slope, intercept, r_squared = _ols_line(log_kappa, log_speed)
    return FitResult(slope, intercept, r_squared, int(valid.sum()))


@dataclass(eq=False)
class ProfileMetrics:
    """Shape statistics of a movement's speed profile."""

    n_velocity_peaks: int
    time_to_peak_ratio: float
    n_accel_zero_crossings: int
    peak_speed: float


def _count_peaks(signal, hysteresis):
    """Count local maxima, ignoring excursions smaller than `hysteresis`.

    Classic peak-valley alternation: a candidate maximum becomes a peak
    once the signal has dropped more than `hysteresis` below it, and a new
    candidate opens once the signal has risen more than `hysteresis` above
    the intervening minimum. Ripple within the hysteresis band is invisible,
    and a flat plateau counts as a single peak.
    """
    peaks = []
    candidate = signal[0]
    candidate_idx = 0
    valley = signal[0]
    rising = True
    for i, v in enumerate(signal):
        if rising:
            if v > candidate:
                candidate = v
                candidate_idx = i
            elif candidate - v > hysteresis:
                peaks.append((candidate_idx, candidate))
                valley = v
                rising = False
        else:
            if v < valley:
                valley = v
            elif v - valley > hysteresis:
                candidate = v
                candidate_idx = i
                rising = True
    if rising:
        peaks.append((candidate_idx, candidate))
    return peaks


def _count_sign_alternations(values, deadband):
    """Count +/- alternations of `values`, ignoring |v| <= deadband."""
    signs = np.sign(values[np.abs(values) > deadband])
    if len(signs) == 0:
        return 0
    return int(np.sum(signs[1:] != signs[:-1]))


def velocity_profile_metrics(positions, dt, peak_threshold_fraction=0.05,
                             crossing_deadband_fraction=0.05):
    """Peak count, peak timing, and acceleration sign structure of a reach.

    Speed is the norm of the centrally differenced position. Peaks are
    counted with a hysteresis of `peak_threshold_fraction` of the maximum
    speed, and peaks below that same level are discarded; a flat plateau
    counts as one peak. Tangential acceleration is the derivative of the
    5-sample moving-average speed, smoothed again with the same window, and
    its zero crossings are counted outside a deadband of
    `crossing_deadband_fraction` of its own maximum so that noise ripple
    around zero is not miscounted.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    if positions.ndim != 2 or len(positions) < 10:
        raise ValueError("need a trajectory of at least 10 samples")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    velocity = np.gradient(positions, dt, axis=0)
    speed = np.linalg.norm(velocity, axis=1)
    peak_speed = float(speed.max())
    if peak_speed <= 0.0:
        raise ValueError("degenerate trajectory: speed is identically zero")

    threshold = peak_threshold_fraction * peak_speed
    peaks = [(i, v) for i, v in _count_peaks(speed, threshold) if v >= threshold]
    movement_time = (len(positions) - 1) * dt
    t_peak = int(np.argmax(speed)) * dt
    ratio = t_peak / movement_time

    window = 5
    smooth_speed = _moving_average(speed, window)
    accel = _moving_average(np.gradient(smooth_speed, dt), window)
    # The absolute floor keeps a nominally zero acceleration signal (pure
    # finite-difference roundoff, e.g. a constant-velocity segment) from
    # registering crossings.
    deadband = max(
        crossing_deadband_fraction * float(np.abs(accel).max()),
        1e-12 * peak_speed / dt,
    )
    crossings = _count_sign_alternations(accel, deadband)

    return ProfileMetrics(
        n_velocity_peaks=len(peaks),
        time_to_peak_ratio=float(ratio),
        n_accel_zero_crossings=crossings,
        peak_speed=peak_speed,
    )
