"""Discrete-time plants: point masses, a planar two-link arm, a trapped particle.

All plants integrate with semi-implicit Euler: accelerations are evaluated at
the current state, velocity-like states update first, position-like states
update with the new velocities.  State layouts:

    PointMass1D        (p, v)                       control: force (N)
    PointMass2D        (px, py, vx, vy)             control: force (N)
    TwoLinkArm         (q1, q2, dq1, dq2,           control: normalized muscle
                        sig1, sig2, dsig1, dsig2)   excitation in [-1, 1]
    LevitatedParticle  (px, py, pz, vx, vy, vz)     control: trap position (m)

The arm's muscle state sig follows the critically damped second-order filter
tau_m^2 * sig'' + 2 tau_m * sig' + sig = u and produces joint torque
tau = max_torque * sig.  The levitated particle sits in a linear spring trap
with axial/radial stiffness, linear drag, and gravity along -z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import Trajectory, FLAG_SATURATED


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Control and observation noise levels.

    additive_control_std: per-dimension (or scalar) std of additive control noise.
    signal_dependent_scale: sigma_u; the applied control is u * (1 + sigma_u * eps)
        with eps standard normal per control dimension.
    observation_std: per-output (or scalar) std of observation noise (used by
        estimators, not by step itself).
    """

    additive_control_std: float | np.ndarray = 0.0
    signal_dependent_scale: float = 0.0
    observation_std: float | np.ndarray = 0.0

    def __post_init__(self):
        for name in ("additive_control_std", "signal_dependent_scale", "observation_std"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"{name} must be non-negative")

    @property
    def control_noise_active(self) -> bool:
        return bool(
            np.any(np.asarray(self.additive_control_std) > 0)
            or self.signal_dependent_scale > 0
        )

    def additive_vector(self, dim: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.additive_control_std, dtype=float), (dim,))

    def observation_vector(self, dim: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.observation_std, dtype=float), (dim,))


ZERO_NOISE = NoiseSpec()


class Plant:
    """Shared plumbing; concrete plants are frozen dataclasses below."""

    name = "plant"
    state_dim = 0
    control_dim = 0
    position_slice = slice(0, 0)
    velocity_slice = slice(0, 0)

    def _validate_common(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1] s")
        if self.control_bounds is not None:
            lo, hi = self.control_bounds
            if np.any(np.asarray(lo) >= np.asarray(hi)):
                raise ValueError("control_bounds must satisfy lo < hi")

    def position(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.position_slice]

    def velocity(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.velocity_slice]


@dataclass(frozen=True, eq=False)
class PointMass1D(Plant):
    mass: float = 1.0
    damping: float = 0.0
    dt: float = 0.01
    control_bounds: tuple | None = None

    name = "point-mass-1d"
    state_dim = 2
    control_dim = 1
    position_slice = slice(0, 1)
    velocity_slice = slice(1, 2)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        self._validate_common()

    def step_deterministic(self, x, u):
        p, v = x
        a = (u[0] - self.damping * v) / self.mass
        v_next = v + self.dt * a
        p_next = p + self.dt * v_next
        return np.array([p_next, v_next])


@dataclass(frozen=True, eq=False)
class PointMass2D(Plant):
    mass: float = 1.0
    damping: float = 0.0
    dt: float = 0.01
    control_bounds: tuple | None = None

    name = "point-mass-2d"
    state_dim = 4
    control_dim = 2
    position_slice = slice(0, 2)
    velocity_slice = slice(2, 4)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        self._validate_common()

    def step_deterministic(self, x, u):
        p = x[0:2]
        v = x[2:4]
        a = (u - self.damping * v) / self.mass
        v_next = v + self.dt * a
        p_next = p + self.dt * v_next
        return np.concatenate([p_next, v_next])


@dataclass(frozen=True, eq=False)
class TwoLinkArm(Plant):
    """Planar two-link arm with aggregated second-order muscle dynamics.

    Links are uniform rods (COM at mid-length, inertia m*l^2/12 about the COM).
    Gravity is off by default (horizontal plane); set gravity to 9.81 for a
    vertical plane.
    """

    l1: float = 0.30
    l2: float = 0.33
    m1: float = 1.4
    m2: float = 1.0
    tau_m: float = 0.04
    max_torque: tuple = (10.0, 5.0)
    gravity: float = 0.0
    dt: float = 0.01
    control_bounds: tuple | None = (-1.0, 1.0)

    name = "two-link-arm"
    state_dim = 8
    control_dim = 2
    position_slice = slice(0, 2)
    velocity_slice = slice(2, 4)

    def __post_init__(self):
        for field_name in ("l1", "l2", "m1", "m2", "tau_m"):
            if getattr(self, field_name) <= 0:
                raise ValueError(f"{field_name} must be positive")
        if np.any(np.asarray(self.max_torque) <= 0):
            raise ValueError("max_torque must be positive")
        self._validate_common()

    def step_deterministic(self, x, u):
        q = x[0:2]
        dq = x[2:4]
        sig = x[4:6]
        dsig = x[6:8]

        r1, r2 = self.l1 / 2.0, self.l2 / 2.0
        i1 = self.m1 * self.l1**2 / 12.0
        i2 = self.m2 * self.l2**2 / 12.0
        a1 = i1 + i2 + self.m1 * r1**2 + self.m2 * (self.l1**2 + r2**2)
        a2 = self.m2 * self.l1 * r2
        a3 = i2 + self.m2 * r2**2

        c2 = np.cos(q[1])
        s2 = np.sin(q[1])
        m11 = a1 + 2.0 * a2 * c2
        m12 = a3 + a2 * c2
        mass_matrix = np.array([[m11, m12], [m12, a3]])
        coriolis = np.array(
            [-a2 * s2 * (dq[1] ** 2 + 2.0 * dq[0] * dq[1]), a2 * s2 * dq[0] ** 2]
        )

        tau = np.asarray(self.max_torque) * sig
        rhs = tau - coriolis
        if self.gravity != 0.0:
            g = self.gravity
            c1 = np.cos(q[0])
            c12 = np.cos(q[0] + q[1])
            rhs = rhs - np.array(
                [(self.m1 * r1 + self.m2 * self.l1) * g * c1 + self.m2 * r2 * g * c12,
                 self.m2 * r2 * g * c12]
            )
        ddq = np.linalg.solve(mass_matrix, rhs)
        ddsig = (u - sig - 2.0 * self.tau_m * dsig) / self.tau_m**2

        dq_next = dq + self.dt * ddq
        q_next = q + self.dt * dq_next
        dsig_next = dsig + self.dt * ddsig
        sig_next = sig + self.dt * dsig_next
        return np.concatenate([q_next, dq_next, sig_next, dsig_next])


@dataclass(frozen=True, eq=False)
class LevitatedParticle(Plant):
    """Millimeter-scale bead in a linear spring trap with drag and gravity."""

    mass: float = 0.7e-6
    stiffness_radial: float = 0.03
    stiffness_axial: float = 0.06
    drag: float = 1e-7
    gravity: float = 9.81
    dt: float = 1e-3
    control_bounds: tuple | None = None

    name = "levitated-particle"
    state_dim = 6
    control_dim = 3
    position_slice = slice(0, 3)
    velocity_slice = slice(3, 6)

    def __post_init__(self):
        for field_name in ("mass", "stiffness_radial", "stiffness_axial"):
            if getattr(self, field_name) <= 0:
                raise ValueError(f"{field_name} must be positive")
        if self.drag < 0:
            raise ValueError("drag must be non-negative")
        self._validate_common()

    @property
    def stiffness(self) -> np.ndarray:
        return np.array([self.stiffness_radial, self.stiffness_radial, self.stiffness_axial])

    def step_deterministic(self, x, u):
        p = x[0:3]
        v = x[3:6]
        a = (-self.stiffness * (p - u) - self.drag * v) / self.mass
        a = a - np.array([0.0, 0.0, self.gravity])
        v_next = v + self.dt * a
        p_next = p + self.dt * v_next
        return np.concatenate([p_next, v_next])


PLANTS = {
    "levitated-particle": LevitatedParticle,
    "point-mass-1d": PointMass1D,
    "point-mass-2d": PointMass2D,
    "two-link-arm": TwoLinkArm,
}


def make_plant(name: str, **params) -> Plant:
    if name not in PLANTS:
        raise ValueError(f"unknown plant {name!r}; known: {sorted(PLANTS)}")
    return PLANTS[name](**params)


def clamp_control(plant: Plant, u: np.ndarray):
    """Clamp u to the plant bounds; returns (clamped, saturated_flag)."""
    u = np.asarray(u, dtype=float)
    if plant.control_bounds is None:
        return u, False
    lo, hi = plant.control_bounds
    clamped = np.clip(u, lo, hi)
    return clamped, bool(np.any(clamped != u))


def _check_xu(plant, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({plant.state_dim},)")
    if u.shape != (plant.control_dim,):
        raise ValueError(f"control has shape {u.shape}, expected ({plant.control_dim},)")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite state or control")
    return x, u


def step(plant: Plant, x, u, noise: NoiseSpec = ZERO_NOISE, rng=None) -> np.ndarray:
    """One noisy step.  The commanded control is clamped to bounds, then
    signal-dependent and additive noise perturb the clamped command; the plant
    sees the noisy control unclamped."""
    x, u = _check_xu(plant, x, u)
    u_cmd, _ = clamp_control(plant, u)
    u_eff = u_cmd
    if noise.signal_dependent_scale > 0:
        if rng is None:
            raise ValueError("rng required when noise is active")
        eps = rng.standard_normal(plant.control_dim)
        u_eff = u_eff * (1.0 + noise.signal_dependent_scale * eps)
    add = noise.additive_vector(plant.control_dim)
    if np.any(add > 0):
        if rng is None:
            raise ValueError("rng required when noise is active")
        u_eff = u_eff + add * rng.standard_normal(plant.control_dim)
    return plant.step_deterministic(x, u_eff)


def rollout(plant: Plant, x0, controls, noise: NoiseSpec = ZERO_NOISE, seed: int = 0) -> Trajectory:
    """Apply controls sequentially; records clamped controls and saturation flags."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls.reshape(-1, plant.control_dim)
    if len(controls) == 0:
        raise ValueError("controls must be non-empty")
    rng = np.random.default_rng(seed) if noise.control_noise_active else None
    x = np.asarray(x0, dtype=float)
    states = [x]
    applied = np.empty_like(controls)
    flags = np.zeros(len(controls), dtype=int)
    for k, u in enumerate(controls):
        u_c, saturated = clamp_control(plant, u)
        if saturated:
            flags[k] |= FLAG_SATURATED
        x = step(plant, x, u_c, noise, rng)
        states.append(x)
        applied[k] = u_c
    return Trajectory(
        dt=plant.dt, states=np.asarray(states), controls=applied, seed=seed, flags=flags
    )


def linearize(plant: Plant, x_ref, u_ref):
    """Jacobians of the noise-free, unclamped step by central differences.

    Perturbation per coordinate is h = 1e-6 * max(1, |entry|).
    """
    x_ref, u_ref = _check_xu(plant, x_ref, u_ref)
    n, m = plant.state_dim, plant.control_dim
    a_mat = np.empty((n, n))
    b_mat = np.empty((n, m))
    for j in range(n):
        h = 1e-6 * max(1.0, abs(x_ref[j]))
        xp = x_ref.copy()
        xm = x_ref.copy()
        xp[j] += h
        xm[j] -= h
        a_mat[:, j] = (
            plant.step_deterministic(xp, u_ref) - plant.step_deterministic(xm, u_ref)
        ) / (2.0 * h)
    for j in range(m):
        h = 1e-6 * max(1.0, abs(u_ref[j]))
        up = u_ref.copy()
        um = u_ref.copy()
        up[j] += h
        um[j] -= h
        b_mat[:, j] = (
            plant.step_deterministic(x_ref, up) - plant.step_deterministic(x_ref, um)
        ) / (2.0 * h)
    if not (np.all(np.isfinite(a_mat)) and np.all(np.isfinite(b_mat))):
        raise ValueError("non-finite Jacobian entries")
    return a_mat, b_mat


def forward_kinematics(arm: TwoLinkArm, q):
    """End-effector position and Jacobian of the planar two-link arm."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite joint angles")
    c1, s1 = np.cos(q[0]), np.sin(q[0])
    c12, s12 = np.cos(q[0] + q[1]), np.sin(q[0] + q[1])
    pos = np.array([arm.l1 * c1 + arm.l2 * c12, arm.l1 * s1 + arm.l2 * s12])
    jac = np.array(
        [
            [-arm.l1 * s1 - arm.l2 * s12, -arm.l2 * s12],
            [arm.l1 * c1 + arm.l2 * c12, arm.l2 * c12],
        ]
    )
    return pos, jac


def end_effector_state(arm: TwoLinkArm, x):
    """End-effector position and velocity for an arm state vector."""
    pos, jac = forward_kinematics(arm, x[0:2])
    return pos, jac @ x[2:4]
