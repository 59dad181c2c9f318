"""Closed planar curves for the levitation renderer.

Every shape is a periodic map from s in [0, 1) to a point in its own 2D
plane, with analytic first and second derivatives in s.  PathSpec embeds a
shape into 3D (center plus plane orientation) and validates regularity:
the curve must close, must never have a vanishing tangent, and its supplied
derivatives must agree with finite differences of the position map.

The rounded square is arc-length parameterized; the other analytic shapes
use their natural angle parameter.  SampledClosedCurve wraps a periodic
cubic spline through user points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

TWO_PI = 2.0 * np.pi


@dataclass(eq=False)
class Circle:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def point(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def velocity(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return TWO_PI * self.radius * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    def acceleration(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return -(TWO_PI**2) * self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)


@dataclass(eq=False)
class Ellipse:
    semi_major: float
    semi_minor: float

    def __post_init__(self):
        if self.semi_major <= 0 or self.semi_minor <= 0:
            raise ValueError("semi-axes must be positive")

    def point(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return np.stack(
            [self.semi_major * np.cos(th), self.semi_minor * np.sin(th)], axis=-1
        )

    def velocity(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return TWO_PI * np.stack(
            [-self.semi_major * np.sin(th), self.semi_minor * np.cos(th)], axis=-1
        )

    def acceleration(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        return -(TWO_PI**2) * np.stack(
            [self.semi_major * np.cos(th), self.semi_minor * np.sin(th)], axis=-1
        )


@dataclass(eq=False)
class Cardioid:
    """Heart-like limacon r(theta) = scale * (1 + rounding - cos(theta)).

    A true cardioid (rounding = 0) has a cusp with zero tangent speed at
    theta = 0, which the regularity contract forbids; the small rounding
    keeps the notch but bounds the curvature.
    """

    scale: float
    rounding: float = 0.08

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.rounding <= 0:
            raise ValueError("rounding must be positive (zero gives a cusp)")

    def _polar(self, th):
        r = self.scale * (1.0 + self.rounding - np.cos(th))
        dr = self.scale * np.sin(th)
        ddr = self.scale * np.cos(th)
        return r, dr, ddr

    def point(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        r, _, _ = self._polar(th)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def velocity(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        r, dr, _ = self._polar(th)
        vx = dr * np.cos(th) - r * np.sin(th)
        vy = dr * np.sin(th) + r * np.cos(th)
        return TWO_PI * np.stack([vx, vy], axis=-1)

    def acceleration(self, s):
        th = TWO_PI * np.asarray(s, dtype=float)
        r, dr, ddr = self._polar(th)
        ax = (ddr - r) * np.cos(th) - 2.0 * dr * np.sin(th)
        ay = (ddr - r) * np.sin(th) + 2.0 * dr * np.cos(th)
        return TWO_PI**2 * np.stack([ax, ay], axis=-1)


@dataclass(eq=False)
class RoundedSquare:
    """Axis-aligned square with quarter-circle corners, arc-length in s.

    Tangent-continuous (C1); curvature jumps where straights meet arcs,
    which the trap-feasibility constraint tolerates because it depends on
    acceleration magnitude, not its derivative.
    """

    side: float
    corner_radius: float

    def __post_init__(self):
        if self.side <= 0 or self.corner_radius <= 0:
            raise ValueError("side and corner_radius must be positive")
        if 2.0 * self.corner_radius >= self.side:
            raise ValueError("corner_radius must be less than side/2")
        self._straight = self.side - 2.0 * self.corner_radius
        self._arc = 0.5 * np.pi * self.corner_radius
        self._perimeter = 4.0 * (self._straight + self._arc)

    def _eval(self, s, order):
        h = 0.5 * self.side
        rho = self.corner_radius
        st = self._straight
        arc = self._arc
        seg_len = np.array([st, arc] * 4)
        seg_start = np.concatenate([[0.0], np.cumsum(seg_len)[:-1]])
        # Segment traversal starts mid bottom edge heading +x, counterclockwise.
        line_from = [
            np.array([-st / 2.0, -h]),
            np.array([h, -st / 2.0]),
            np.array([st / 2.0, h]),
            np.array([-h, st / 2.0]),
        ]
        line_dir = [
            np.array([1.0, 0.0]),
            np.array([0.0, 1.0]),
            np.array([-1.0, 0.0]),
            np.array([0.0, -1.0]),
        ]
        arc_center = [
            np.array([st / 2.0, -st / 2.0]),
            np.array([st / 2.0, st / 2.0]),
            np.array([-st / 2.0, st / 2.0]),
            np.array([-st / 2.0, -st / 2.0]),
        ]
        arc_phi0 = [-0.5 * np.pi, 0.0, 0.5 * np.pi, np.pi]

        s = np.asarray(s, dtype=float)
        ell = np.mod(s, 1.0) * self._perimeter
        out = np.zeros(s.shape + (2,))
        idx = np.minimum(np.searchsorted(seg_start, ell, side="right") - 1, 7)
        for seg in range(8):
            mask = idx == seg
            if not np.any(mask):
                continue
            local = ell[mask] - seg_start[seg]
            corner = seg // 2
            if seg % 2 == 0:
                if order == 0:
                    out[mask] = line_from[corner] + np.outer(local, line_dir[corner])
                elif order == 1:
                    out[mask] = self._perimeter * line_dir[corner]
                else:
                    out[mask] = 0.0
            else:
                phi = arc_phi0[corner] + local / rho
                cphi, sphi = np.cos(phi), np.sin(phi)
                if order == 0:
                    out[mask] = arc_center[corner] + rho * np.stack([cphi, sphi], axis=-1)
                elif order == 1:
                    out[mask] = self._perimeter * np.stack([-sphi, cphi], axis=-1)
                else:
                    out[mask] = -(self._perimeter**2 / rho) * np.stack(
                        [cphi, sphi], axis=-1
                    )
        return out

    def point(self, s):
        return self._eval(s, 0)

    def velocity(self, s):
        return self._eval(s, 1)

    def acceleration(self, s):
        return self._eval(s, 2)


class SampledClosedCurve:
    """Periodic cubic spline through user-supplied planar points.

    Points are parameterized uniformly in s; the closing point must not be
    duplicated (the spline wraps the last point back to the first).
    """

    def __init__(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 4:
            raise ValueError("need at least 4 planar points, shape (n, 2)")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        if np.allclose(points[0], points[-1]):
            points = points[:-1]
        if len(points) < 4:
            raise ValueError("need at least 4 distinct points")
        self.points = points
        grid = np.linspace(0.0, 1.0, len(points) + 1)
        closed = np.vstack([points, points[:1]])
        self._spline = CubicSpline(grid, closed, bc_type="periodic")

    def point(self, s):
        return self._spline(np.mod(np.asarray(s, dtype=float), 1.0))

    def velocity(self, s):
        return self._spline(np.mod(np.asarray(s, dtype=float), 1.0), 1)

    def acceleration(self, s):
        return self._spline(np.mod(np.asarray(s, dtype=float), 1.0), 2)


SHAPES = {
    "cardioid": Cardioid,
    "circle": Circle,
    "ellipse": Ellipse,
    "rounded-square": RoundedSquare,
    "sampled-closed-curve": SampledClosedCurve,
}


def _plane_basis(normal):
    normal = np.asarray(normal, dtype=float)
    nn = np.linalg.norm(normal)
    if nn == 0:
        raise ValueError("plane normal must be nonzero")
    normal = normal / nn
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, normal)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return normal, e1, e2


class PathSpec:
    """A shape embedded in 3D with validated regularity.

    sample(s) returns position, ds-velocity, and ds-acceleration rows for
    any array of path parameters; all three are periodic with period 1.
    """

    def __init__(self, shape, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0),
                 n_samples=400):
        if n_samples < 16:
            raise ValueError("n_samples must be at least 16")
        self.shape = shape
        self.center = np.asarray(center, dtype=float)
        if self.center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        self.normal, self._e1, self._e2 = _plane_basis(normal)
        self.n_samples = int(n_samples)
        self._validate()

    def sample(self, s):
        s = np.asarray(s, dtype=float)
        p2 = self.shape.point(s)
        v2 = self.shape.velocity(s)
        a2 = self.shape.acceleration(s)
        basis = np.stack([self._e1, self._e2])
        return (self.center + p2 @ basis, v2 @ basis, a2 @ basis)

    def _validate(self):
        q0, _, _ = self.sample(np.array([0.0]))
        q1, _, _ = self.sample(np.array([1.0]))
        scale = max(1.0, float(np.abs(q0).max()))
        if np.abs(q1 - q0).max() > 1e-12 * scale:
            raise ValueError("path is not closed: q(0) != q(1)")
        grid = np.arange(self.n_samples) / self.n_samples
        q, dq, ddq = self.sample(grid)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq)) and np.all(np.isfinite(ddq))):
            raise ValueError("path samples must be finite")
        speeds = np.linalg.norm(dq, axis=1)
        if speeds.min() <= 0.0:
            bad = grid[int(np.argmin(speeds))]
            raise ValueError(f"degenerate tangent (|q'| = 0) at s = {bad}")
        h = 1e-6
        qp, _, _ = self.sample(grid + h)
        qm, _, _ = self.sample(grid - h)
        fd = (qp - qm) / (2.0 * h)
        err = np.abs(fd - dq).max() / max(1.0, np.abs(dq).max())
        if err > 1e-6:
            raise ValueError(f"q' inconsistent with finite differences of q (err {err:.2e})")
        _, vp, _ = self.sample(grid + h)
        _, vm, _ = self.sample(grid - h)
        fd2 = (vp - vm) / (2.0 * h)
        err2 = np.abs(fd2 - ddq).max(axis=1) / max(1.0, np.abs(ddq).max())
        # Isolated failures are fine: a C1 shape has curvature jumps at
        # segment joins where the centered stencil straddles the kink.  A
        # systematic derivative bug shows up at most sample points instead.
        if np.mean(err2 > 1e-6) > 0.02:
            raise ValueError(
                f"q'' inconsistent with finite differences of q' (worst err {err2.max():.2e})"
            )

    @property
    def diameter(self) -> float:
        grid = np.arange(self.n_samples) / self.n_samples
        q, _, _ = self.sample(grid)
        return float(
            max(q[:, i].max() - q[:, i].min() for i in range(3))
        )


def make_shape(name: str, **params):
    """Construct a shape by registry name."""
    if name not in SHAPES:
        known = ", ".join(sorted(SHAPES))
        raise ValueError(f"unknown shape '{name}'; known shapes: {known}")
    return SHAPES[name](**params)
