"""Composable movement cost terms and their stage-wise quadratic expansions.

Shipped terms: TerminalDistance (position error at the final state, in state
or end-effector space), TerminalStability (squared terminal velocity),
ControlEffort, JointAcceleration (squared velocity differences over dt), and
TimeConstant (a constant per step).  Every term is pointwise non-negative and
scales linearly in its weight.

quadratize produces the second-order stage expansion used by the trajectory
optimizer: exact for the quadratic terms, Gauss-Newton through the kinematic
or dynamic Jacobian for the rest, so first-order blocks always match finite
differences of the stage cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plants import Plant, TwoLinkArm, forward_kinematics, linearize
from .trajectory import Trajectory

_SPACES = ("state", "end_effector")


@dataclass(frozen=True, eq=False)
class TerminalDistance:
    target: tuple
    weight: float = 1.0
    space: str = "state"

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.weight < 0:
            raise ValueError("weight must be non-negative")
        if self.space not in _SPACES:
            raise ValueError(f"unknown space {self.space!r}; expected one of {_SPACES}")


@dataclass(frozen=True, eq=False)
class TerminalStability:
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True, eq=False)
class ControlEffort:
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True, eq=False)
class JointAcceleration:
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True, eq=False)
class TimeConstant:
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True, eq=False)
class CostSpec:
    terms: tuple
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("at least one cost term required")
        if not any(t.weight > 0 for t in self.terms):
            raise ValueError("at least one term must have positive weight")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


COST_KINDS = {
    "terminal-distance": TerminalDistance,
    "terminal-stability": TerminalStability,
    "control-effort": ControlEffort,
    "joint-acceleration": JointAcceleration,
    "time-constant": TimeConstant,
}


def cost_terms_from_config(entries):
    """Build cost terms from config-file dicts of {kind, weight, target, space}.

    Only terminal-distance accepts target and space; every kind accepts
    weight. Raises ValueError naming the offending entry field.
    """
    terms = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ValueError(f"cost[{i}]: each entry must be an object")
        entry = dict(entry)
        kind = entry.pop("kind", None)
        if kind not in COST_KINDS:
            known = ", ".join(sorted(COST_KINDS))
            raise ValueError(f"cost[{i}].kind: expected one of {known}, got {kind!r}")
        kwargs = {}
        if "weight" in entry:
            kwargs["weight"] = float(entry.pop("weight"))
        if kind == "terminal-distance":
            if "target" not in entry:
                raise ValueError(f"cost[{i}].target: required for terminal-distance")
            kwargs["target"] = tuple(float(v) for v in entry.pop("target"))
            if "space" in entry:
                kwargs["space"] = entry.pop("space")
        if entry:
            extra = ", ".join(sorted(entry))
            raise ValueError(f"cost[{i}]: unknown fields for {kind}: {extra}")
        try:
            terms.append(COST_KINDS[kind](**kwargs))
        except ValueError as exc:
            raise ValueError(f"cost[{i}]: {exc}") from exc
    return tuple(terms)


def _distance_residual(term: TerminalDistance, plant: Plant, x):
    """Residual vector and its Jacobian w.r.t. the state."""
    n = plant.state_dim
    if term.space == "end_effector" and isinstance(plant, TwoLinkArm):
        pos, jac_q = forward_kinematics(plant, x[0:2])
        if term.target.shape != pos.shape:
            raise ValueError("target dimension does not match end-effector space")
        jac = np.zeros((2, n))
        jac[:, 0:2] = jac_q
        return pos - term.target, jac
    # state space; for non-arm plants the end effector is the position block
    pos = plant.position(x)
    if term.target.shape != pos.shape:
        raise ValueError("target dimension does not match position block")
    sl = plant.position_slice
    jac = np.zeros((len(pos), n))
    jac[:, sl] = np.eye(len(pos))
    return pos - term.target, jac


def evaluate(spec: CostSpec, traj: Trajectory, plant: Plant) -> float:
    """Total cost of a trajectory under the spec."""
    if traj.n_steps != spec.horizon:
        raise ValueError(
            f"trajectory has {traj.n_steps} steps but cost horizon is {spec.horizon}"
        )
    x_final = traj.states[-1]
    total = 0.0
    for term in spec.terms:
        if isinstance(term, TerminalDistance):
            r, _ = _distance_residual(term, plant, x_final)
            total += term.weight * float(r @ r)
        elif isinstance(term, TerminalStability):
            v = plant.velocity(x_final)
            total += term.weight * float(v @ v)
        elif isinstance(term, ControlEffort):
            total += term.weight * float(np.sum(traj.controls**2))
        elif isinstance(term, JointAcceleration):
            vel = traj.states[:, plant.velocity_slice]
            acc = np.diff(vel, axis=0) / traj.dt
            total += term.weight * float(np.sum(acc**2))
        elif isinstance(term, TimeConstant):
            total += term.weight * spec.horizon
        else:
            raise ValueError(f"unknown cost term {type(term).__name__}")
    return float(total)


def stage_cost(spec: CostSpec, x, u, k: int, plant: Plant) -> float:
    """Cost contribution of stage k at (x, u); terminal terms only at k = N."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    if k == spec.horizon:
        for term in spec.terms:
            if isinstance(term, TerminalDistance):
                r, _ = _distance_residual(term, plant, x)
                total += term.weight * float(r @ r)
            elif isinstance(term, TerminalStability):
                v = plant.velocity(x)
                total += term.weight * float(v @ v)
        return total
    u = np.asarray(u, dtype=float)
    for term in spec.terms:
        if isinstance(term, ControlEffort):
            total += term.weight * float(u @ u)
        elif isinstance(term, TimeConstant):
            total += term.weight
        elif isinstance(term, JointAcceleration):
            v_now = plant.velocity(x)
            v_next = plant.velocity(plant.step_deterministic(x, u))
            acc = (v_next - v_now) / plant.dt
            total += term.weight * float(acc @ acc)
    return total


@dataclass(eq=False)
class StageQuadratic:
    l: float
    lx: np.ndarray
    lu: np.ndarray
    lxx: np.ndarray
    luu: np.ndarray
    lux: np.ndarray


def quadratize(spec: CostSpec, x, u, k: int, plant: Plant, linearization=None) -> StageQuadratic:
    """Second-order expansion of stage k's cost at (x, u).

    At k = N only terminal terms contribute and u is ignored.  The optional
    linearization argument lets callers that already hold (A, B) at this point
    avoid a repeat finite-difference pass for the JointAcceleration term.
    """
    if not 0 <= k <= spec.horizon:
        raise ValueError(f"stage index {k} outside [0, {spec.horizon}]")
    x = np.asarray(x, dtype=float)
    n = plant.state_dim
    m = plant.control_dim
    u = np.zeros(m) if u is None else np.asarray(u, dtype=float)
    out = StageQuadratic(
        l=0.0,
        lx=np.zeros(n),
        lu=np.zeros(m),
        lxx=np.zeros((n, n)),
        luu=np.zeros((m, m)),
        lux=np.zeros((m, n)),
    )

    if k == spec.horizon:
        for term in spec.terms:
            if isinstance(term, TerminalDistance):
                r, jac = _distance_residual(term, plant, x)
                w = term.weight
                out.l += w * float(r @ r)
                out.lx += 2.0 * w * (jac.T @ r)
                out.lxx += 2.0 * w * (jac.T @ jac)
            elif isinstance(term, TerminalStability):
                v = plant.velocity(x)
                sl = plant.velocity_slice
                w = term.weight
                out.l += w * float(v @ v)
                out.lx[sl] += 2.0 * w * v
                out.lxx[sl, sl] += 2.0 * w * np.eye(len(v))
        return _check_finite(out)

    needs_lin = any(isinstance(t, JointAcceleration) for t in spec.terms)
    if needs_lin and linearization is None:
        linearization = linearize(plant, x, u)
    for term in spec.terms:
        if isinstance(term, ControlEffort):
            w = term.weight
            out.l += w * float(u @ u)
            out.lu += 2.0 * w * u
            out.luu += 2.0 * w * np.eye(m)
        elif isinstance(term, TimeConstant):
            out.l += term.weight
        elif isinstance(term, JointAcceleration):
            a_mat, b_mat = linearization
            sl = plant.velocity_slice
            v_now = plant.velocity(x)
            v_next = plant.velocity(plant.step_deterministic(x, u))
            r = (v_next - v_now) / plant.dt
            sel = np.zeros((len(v_now), n))
            sel[:, sl] = np.eye(len(v_now))
            jx = (a_mat[sl, :] - sel) / plant.dt
            ju = b_mat[sl, :] / plant.dt
            w = term.weight
            out.l += w * float(r @ r)
            out.lx += 2.0 * w * (jx.T @ r)
            out.lu += 2.0 * w * (ju.T @ r)
            out.lxx += 2.0 * w * (jx.T @ jx)
            out.luu += 2.0 * w * (ju.T @ ju)
            out.lux += 2.0 * w * (ju.T @ jx)
    return _check_finite(out)


def _check_finite(q: StageQuadratic) -> StageQuadratic:
    for arr in (q.lx, q.lu, q.lxx, q.luu, q.lux):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite derivatives in cost expansion")
    return q
