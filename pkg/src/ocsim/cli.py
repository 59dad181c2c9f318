"""Batch experiment runner: config-driven sweeps with deterministic outputs.

Commands: run, validate, list-shapes, list-plants. One JSON config per
experiment; any scalar field can be overridden from the command line with
`--dotted.path value`. Outputs land in one directory per run (flag, config
field, OCSIM_OUTPUT_DIR, or ./ocsim-<kind> in that order of preference),
each artifact written once, with a manifest recording the normalized config,
its hash, the seed, and the toolkit version written last. No wall-clock
anything goes into the files, so rerunning a config byte-reproduces them.

Exit codes: 0 success, 1 runtime failure (diagnostic names the failing
module and operation), 2 invalid config (diagnostic names the field).
"""

import argparse
import inspect
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, experiments
from .analysis import TrialRecord, fitts_fit, power_law_fit, velocity_profile_metrics
from .config import (
    ConfigError,
    apply_overrides,
    config_hash,
    load_config,
    parse_override_tokens,
    validate_config,
)
from .costs import cost_terms_from_config
from .ilqr import SolverOptions
from .levitation import TrapParams
from .plants import PLANTS
from .shapes import SHAPES
from .trajectory import read_csv as read_trajectory_csv
from .trajectory import write_csv as write_trajectory_csv
from .trajectory import write_json as write_trajectory_json

ENV_OUTPUT_DIR = "OCSIM_OUTPUT_DIR"

__all__ = ["main", "run_experiment", "ENV_OUTPUT_DIR"]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _write_csv(path, header, rows):
    """Rows of mixed numbers/bools/ints, formatted deterministically."""
    def cell(value):
        if value is None:
            return ""
        if isinstance(value, (bool, np.bool_)):
            return "1" if value else "0"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        return format(float(value), ".17g")

    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


def _fit_dict(fit):
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
    }


def _profile_dict(metrics):
    return asdict(metrics)


def _run_lqg_reach(cfg, outdir):
    res = experiments.lqg_reach(
        sigma_us=cfg["sigma_us"],
        n_trials=cfg["n_trials"],
        distance=cfg["distance"],
        horizon=cfg["horizon"],
        dt=cfg["dt"],
        seed=cfg["seed"],
    )
    mean = res["mean_trajectory"]
    _write_csv(
        os.path.join(outdir, "mean_trajectory.csv"),
        ["t", "position", "velocity"],
        [(k * res["dt"], row[0], row[1]) for k, row in enumerate(mean)],
    )
    _write_json(
        os.path.join(outdir, "report.json"),
        {
            "rows": res["rows"],
            "mean_profile": _profile_dict(res["mean_profile"]),
            "dt": res["dt"],
        },
    )
    return ["mean_trajectory.csv", "report.json"]


def _run_fitts_sweep(cfg, outdir):
    kwargs = {
        "mode": cfg["mode"],
        "n_trials": cfg["n_trials"],
        "sigma_u": cfg["sigma_u"],
        "seed": cfg["seed"],
        "dt": cfg["dt"],
        "max_wall_steps": cfg["max_wall_steps"],
    }
    if cfg["distances"] is not None:
        kwargs["conditions"] = [
            (d, w) for d in cfg["distances"] for w in cfg["widths"]
        ]
    else:
        kwargs["ids"] = cfg["ids"]
        kwargs["distance"] = cfg["distance"]
    res = experiments.fitts_sweep(**kwargs)
    files = []
    for c, _cond in enumerate(res["conditions"]):
        rows = [
            (
                t["distance"],
                t["width"],
                t["reached"],
                t["converged"],
                t["movement_time"],
                t["endpoint"],
                t["seed"],
            )
            for t in res["trials"]
            if t["condition"] == c
        ]
        if not rows:
            continue
        name = f"condition_{c:02d}_trials.csv"
        _write_csv(
            os.path.join(outdir, name),
            ["distance", "width", "reached", "converged",
             "movement_time", "endpoint", "seed"],
            rows,
        )
        files.append(name)
    _write_json(
        os.path.join(outdir, "fitts_report.json"),
        {
            "mode": res["mode"],
            "fit": _fit_dict(res["fit"]),
            "conditions": res["conditions"],
            "dt": res["dt"],
        },
    )
    files.append("fitts_report.json")
    return files


def _run_mpc_reach(cfg, outdir):
    cost_terms = None
    if cfg["cost"] is not None:
        cost_terms = cost_terms_from_config(cfg["cost"])
    res = experiments.mpc_reach(
        plant_kind=cfg["plant"],
        distance=cfg["distance"],
        dt=cfg["dt"],
        planning_horizon=cfg["planning_horizon"],
        apply_steps=cfg["apply_steps"],
        target_radius=cfg["target_radius"],
        max_speed=cfg["max_speed"],
        max_wall_steps=cfg["max_wall_steps"],
        sigma_u=cfg["noise"].get("signal_dependent_scale", 0.0),
        seed=cfg["seed"],
        cost_terms=cost_terms,
        solver_options=SolverOptions(**cfg["solver"]) if cfg["solver"] else None,
        plant_params=cfg["plant_params"],
    )
    log = res["log"]
    write_trajectory_csv(log.trajectory, os.path.join(outdir, "trajectory.csv"))
    write_trajectory_json(log.trajectory, os.path.join(outdir, "trajectory.json"))
    _write_json(os.path.join(outdir, "mpc_log.json"), log.to_json_dict())
    report = {
        "plant": res["plant"],
        "termination_reason": res["termination_reason"],
        "movement_time": res["movement_time"],
        "n_steps": res["n_steps"],
    }
    if "profile" in res:
        report["profile"] = _profile_dict(res["profile"])
    _write_json(os.path.join(outdir, "report.json"), report)
    return ["trajectory.csv", "trajectory.json", "mpc_log.json", "report.json"]


def _run_mpc_perturb(cfg, outdir):
    res = experiments.mpc_perturb(
        n_runs=cfg["n_runs"],
        perturbation_size=cfg["perturbation_size"],
        dt=cfg["dt"],
        planning_horizon=cfg["planning_horizon"],
        target_radius=cfg["target_radius"],
        max_wall_steps=cfg["max_wall_steps"],
        seed=cfg["seed"],
    )
    _write_json(os.path.join(outdir, "report.json"), res)
    return ["report.json"]


def _run_levitate(cfg, outdir):
    run = experiments.levitate_run(
        shape=cfg["shape"],
        shape_params=cfg["shape_params"],
        trap_params=TrapParams(**cfg["trap"]) if cfg["trap"] else None,
        n_grid=cfg["n_grid"],
        output_rate=cfg["output_rate"],
        safety_margin=cfg["safety_margin"],
        cycles=cfg["cycles"],
        warmup_cycles=cfg["warmup_cycles"],
    )
    run.trap_trajectory.write_csv(os.path.join(outdir, "trap_trajectory.csv"))
    law = run.timing_law
    _write_csv(
        os.path.join(outdir, "timing_law.csv"),
        ["s", "beta"],
        list(zip(law.s_grid, law.beta)),
    )
    report = run.report()
    report["shape"] = cfg["shape"]
    _write_json(os.path.join(outdir, "report.json"), report)
    return ["trap_trajectory.csv", "timing_law.csv", "report.json"]


def _analyze_positions(cfg):
    traj = read_trajectory_csv(cfg["input"])
    n_state = traj.states.shape[1]
    for col in cfg["position_columns"]:
        if col >= n_state:
            raise ValueError(
                f"position column {col} out of range for {n_state} state columns"
            )
    positions = traj.states[:, cfg["position_columns"]]
    dt = cfg["dt"] if cfg["dt"] is not None else traj.dt
    return positions, dt


def _run_analyze(cfg, outdir):
    operation = cfg["operation"]
    if operation == "fitts":
        with open(cfg["input"], "r") as fh:
            payload = json.load(fh)
        trials = payload["trials"] if isinstance(payload, dict) else payload
        records = [
            TrialRecord(t["distance"], t["width"], t["movement_time"])
            for t in trials
        ]
        report = {"operation": operation, "fit": _fit_dict(fitts_fit(records))}
    elif operation == "power-law":
        positions, dt = _analyze_positions(cfg)
        fit = power_law_fit(positions, dt, window=cfg["window"])
        report = {"operation": operation, "fit": _fit_dict(fit)}
    else:
        positions, dt = _analyze_positions(cfg)
        metrics = velocity_profile_metrics(
            positions,
            dt,
            peak_threshold_fraction=cfg["peak_threshold_fraction"],
            crossing_deadband_fraction=cfg["crossing_deadband_fraction"],
        )
        report = {"operation": operation, "profile": _profile_dict(metrics)}
    _write_json(os.path.join(outdir, "report.json"), report)
    return ["report.json"]


_RUNNERS = {
    "lqg-reach": _run_lqg_reach,
    "fitts-sweep": _run_fitts_sweep,
    "mpc-reach": _run_mpc_reach,
    "mpc-perturb": _run_mpc_perturb,
    "levitate": _run_levitate,
    "analyze": _run_analyze,
}


def run_experiment(cfg, outdir):
    """Execute a validated config into outdir; the manifest is written last.

    Returns the list of artifact filenames (manifest included).
    """
    os.makedirs(outdir, exist_ok=True)
    files = _RUNNERS[cfg["kind"]](cfg, outdir)
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "outputs": sorted(files),
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    return sorted(files) + ["manifest.json"]


def _deepest_ocsim_frame(exc):
    """Name the failing module and operation from a traceback."""
    located = "ocsim.cli.run_experiment"
    tb = exc.__traceback__
    while tb is not None:
        module = tb.tb_frame.f_globals.get("__name__", "")
        if module.startswith("ocsim"):
            located = f"{module}.{tb.tb_frame.f_code.co_name}"
        tb = tb.tb_next
    return located


def _load_validated(args):
    raw = load_config(args.config)
    pairs = parse_override_tokens(args.overrides)
    raw = apply_overrides(raw, pairs)
    return validate_config(raw)


def _cmd_run(args):
    try:
        cfg = _load_validated(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    outdir = (
        args.output_dir
        or cfg["output_dir"]
        or os.environ.get(ENV_OUTPUT_DIR)
        or f"ocsim-{cfg['kind']}"
    )
    try:
        files = run_experiment(cfg, outdir)
    except Exception as exc:
        where = _deepest_ocsim_frame(exc)
        print(f"runtime error in {where}: {exc}", file=sys.stderr)
        return 1
    for name in files:
        print(os.path.join(outdir, name))
    return 0


def _cmd_validate(args):
    try:
        cfg = _load_validated(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    print(f"ok: {cfg['kind']} config (hash {config_hash(cfg)[:12]})")
    return 0


def _format_registry(registry):
    lines = []
    for name in sorted(registry):
        parts = []
        for p in inspect.signature(registry[name]).parameters.values():
            if p.name.startswith("_"):
                continue
            if p.default is inspect.Parameter.empty:
                parts.append(f"{p.name}=<required>")
            else:
                parts.append(f"{p.name}={p.default!r}")
        lines.append(f"{name}  " + ", ".join(parts))
    return lines


def _cmd_list_shapes(_args):
    for line in _format_registry(SHAPES):
        print(line)
    return 0


def _cmd_list_plants(_args):
    for line in _format_registry(PLANTS):
        print(line)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ocsim",
        description="Run movement and levitation experiments from JSON configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="path to a JSON experiment config")
    run_p.add_argument(
        "--output-dir",
        default=None,
        help=f"output directory (else config output_dir, then ${ENV_OUTPUT_DIR}, "
        "then ./ocsim-<kind>)",
    )
    run_p.set_defaults(func=_cmd_run)

    val_p = sub.add_parser("validate", help="schema-check a config, run nothing")
    val_p.add_argument("config", help="path to a JSON experiment config")
    val_p.set_defaults(func=_cmd_validate)

    shapes_p = sub.add_parser("list-shapes", help="registered shapes and parameters")
    shapes_p.set_defaults(func=_cmd_list_shapes)

    plants_p = sub.add_parser("list-plants", help="registered plants and parameters")
    plants_p.set_defaults(func=_cmd_list_plants)
    return parser


def main(argv=None):
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.command in ("run", "validate"):
        args.overrides = extra
    elif extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
