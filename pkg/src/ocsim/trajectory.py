"""Trajectory record and its CSV/JSON serialization.

A Trajectory is the exchange format between plants, solvers, and analysis:
N+1 state rows, N control rows, the time step, the RNG seed that produced it,
and one integer flag per applied control (bit 0 set means the commanded
control was clamped to the plant bounds).

CSV columns are ``t,x0..xn,u0..um,flags``; the final row has no control, so
its u/flags fields are left empty.  Floats are written with 17 significant
digits so files round-trip exactly.  JSON carries the same fields plus the
seed and any auxiliary arrays (for example estimated states from a closed
loop run), which the CSV format drops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FLAG_SATURATED = 1


@dataclass(eq=False)
class Trajectory:
    dt: float
    states: np.ndarray
    controls: np.ndarray
    seed: int = 0
    flags: np.ndarray | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.ndim != 2 or self.controls.ndim != 2:
            raise ValueError("states and controls must be 2-d arrays")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.states) != len(self.controls) + 1:
            raise ValueError(
                "need exactly one more state row than control rows, got "
                f"{len(self.states)} states and {len(self.controls)} controls"
            )
        if self.flags is None:
            self.flags = np.zeros(len(self.controls), dtype=int)
        else:
            self.flags = np.asarray(self.flags, dtype=int)
            if len(self.flags) != len(self.controls):
                raise ValueError("one flag per control required")

    @property
    def n_steps(self) -> int:
        return len(self.controls)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(traj: Trajectory, path) -> None:
    n_x = traj.states.shape[1]
    n_u = traj.controls.shape[1]
    header = (
        ["t"]
        + [f"x{i}" for i in range(n_x)]
        + [f"u{i}" for i in range(n_u)]
        + ["flags"]
    )
    lines = [",".join(header)]
    for k in range(len(traj.states)):
        cells = [_fmt(k * traj.dt)]
        cells += [_fmt(v) for v in traj.states[k]]
        if k < traj.n_steps:
            cells += [_fmt(v) for v in traj.controls[k]]
            cells.append(str(int(traj.flags[k])))
        else:
            cells += [""] * (n_u + 1)
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> Trajectory:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    header = lines[0].split(",")
    n_x = sum(1 for h in header if h.startswith("x"))
    n_u = sum(1 for h in header if h.startswith("u"))
    states, controls, flags, times = [], [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        times.append(float(cells[0]))
        states.append([float(c) for c in cells[1 : 1 + n_x]])
        u_cells = cells[1 + n_x : 1 + n_x + n_u]
        if u_cells and u_cells[0] != "":
            controls.append([float(c) for c in u_cells])
            flags.append(int(cells[1 + n_x + n_u]))
    if len(times) < 2:
        raise ValueError("trajectory CSV needs at least two rows")
    dt = times[1] - times[0]
    return Trajectory(
        dt=dt,
        states=np.asarray(states),
        controls=np.asarray(controls).reshape(len(controls), n_u),
        flags=np.asarray(flags, dtype=int),
    )


def to_json_dict(traj: Trajectory) -> dict:
    return {
        "dt": traj.dt,
        "seed": int(traj.seed),
        "states": traj.states.tolist(),
        "controls": traj.controls.tolist(),
        "flags": traj.flags.tolist(),
        "aux": {k: np.asarray(v).tolist() for k, v in traj.aux.items()},
    }


def from_json_dict(data: dict) -> Trajectory:
    n_u = len(data["controls"][0]) if data["controls"] else 0
    return Trajectory(
        dt=data["dt"],
        states=np.asarray(data["states"], dtype=float),
        controls=np.asarray(data["controls"], dtype=float).reshape(-1, n_u),
        seed=data.get("seed", 0),
        flags=np.asarray(data.get("flags", []), dtype=int)
        if data.get("flags") is not None
        else None,
        aux={k: np.asarray(v) for k, v in data.get("aux", {}).items()},
    )


def write_json(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(traj), fh)
        fh.write("\n")


def read_json(path) -> Trajectory:
    with open(path) as fh:
        return from_json_dict(json.load(fh))
