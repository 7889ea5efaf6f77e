"""Command line front end.

    spinoc <subcommand> --config <path> [--out <dir>] [--hbar-list a,b,c]
                        [--seed n]

Subcommands
-----------
simulate-classical   integrate the deterministic optimality-system dynamics
optimize-classical   solve the classical control problem
simulate-wigner      evolve a spin Wigner function under the configured u
optimize-wigner      solve the phase-space control problem
limit-sweep          re-solve over the configured hbar ladder, one CSV row
                     per hbar, against the shared classical reference
validate             run the built-in operator cross-checks

``--hbar-list`` and ``--seed`` override the corresponding config entries
before validation, so the reported fingerprint always describes what
actually ran.  Outputs are deterministic: rerunning a subcommand with the
same config writes byte-identical files.  Every run directory receives a
manifest naming each artifact with its SHA-256.  Failures print the module
that raised and the config fingerprint, and exit nonzero (2 for a config
rejected at load, 1 for a runtime failure).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import quantum
from .classical import integrate_forward, objective_value, cost_value, \
    goal_value, optimize as optimize_classical
from .config import RunConfig, load_config
from .dynamics import DIAGNOSTIC_COLUMNS, cfl_timestep, integrate
from .errors import ConfigurationError, SpinocError
from .oracles import run_validation
from .storage import (write_control_csv, write_diagnostics_csv,
                      write_iteration_log, write_json, write_manifest,
                      write_state_binary, write_sweep_csv,
                      write_trajectory_csv)
from .wigner import moments

__all__ = ["main", "run"]

SUBCOMMANDS = ("simulate-classical", "optimize-classical", "simulate-wigner",
               "optimize-wigner", "limit-sweep", "validate")


def _summary(rc: RunConfig, subcommand: str, payload: dict) -> dict:
    out = {"config_fingerprint": rc.fingerprint, "subcommand": subcommand}
    out.update(payload)
    return out


def _classical_summary_payload(traj, u, rc) -> dict:
    final = traj.final_state
    return {
        "objective": objective_value(traj),
        "goal": goal_value(final, rc.oc),
        "cost": cost_value(u, rc.oc),
        "final": {"x": final.x, "p": final.p, "d": final.d},
    }


def _run_simulate_classical(rc: RunConfig, outdir: Path) -> list:
    u = rc.control_signal()
    traj = integrate_forward(rc.classical_state(), u, rc.fields, rc.oc)
    return [
        write_trajectory_csv(outdir / "trajectory.csv", traj),
        write_control_csv(outdir / "control.csv", u),
        write_json(outdir / "summary.json",
                   _summary(rc, "simulate-classical",
                            _classical_summary_payload(traj, u, rc))),
    ]


def _run_optimize_classical(rc: RunConfig, outdir: Path) -> list:
    res = optimize_classical(
        rc.classical_state(), rc.fields, rc.oc, u0=rc.control_signal(),
        max_iterations=rc.max_iterations,
        gradient_tolerance=rc.gradient_tolerance, method=rc.method,
        relaxation=rc.relaxation, step0=rc.step0)
    traj = integrate_forward(rc.classical_state(), res.u, rc.fields, rc.oc)
    payload = _classical_summary_payload(traj, res.u, rc)
    payload.update({"gradient_norm": res.gradient_norm,
                    "iterations": res.iterations,
                    "converged": res.converged, "stalled": res.stalled})
    return [
        write_trajectory_csv(outdir / "trajectory.csv", traj),
        write_control_csv(outdir / "control.csv", res.u),
        write_iteration_log(outdir / "iterations.json", res.history,
                            rc.fingerprint),
        write_json(outdir / "summary.json",
                   _summary(rc, "optimize-classical", payload)),
    ]


def _wigner_forward(rc: RunConfig, u):
    state = rc.wigner_state()
    spec = rc.evolution_spec()
    dt = rc.dt
    if dt is None:
        bound = 2.0 * max(1.0, float(np.abs(u.values).max())
                          if u.values.size else 0.0)
        dt = cfl_timestep(rc.grid, rc.fields, rc.oc.mass, u_bound=bound)
    res = integrate(state, spec, t_final=rc.oc.horizon, dt=dt, u=u,
                    sample_every=rc.sample_every)
    return res


def _moment_payload(state) -> dict:
    m = moments(state)
    return {"mass": m.mass, "mean_x": m.mean_x, "mean_p": m.mean_p,
            "spin": m.spin, "var_x": m.var_x, "var_p": m.var_p}


def _run_simulate_wigner(rc: RunConfig, outdir: Path) -> list:
    u = rc.control_signal()
    res = _wigner_forward(rc, u)
    payload = {"final_time": res.final.time,
               "final_moments": _moment_payload(res.final)}
    return [
        write_diagnostics_csv(outdir / "diagnostics.csv", res.diagnostics,
                              DIAGNOSTIC_COLUMNS),
        write_state_binary(outdir / "final_state.spnw", res.final),
        write_control_csv(outdir / "control.csv", u),
        write_json(outdir / "summary.json",
                   _summary(rc, "simulate-wigner", payload)),
    ]


def _cutoff_radius(rc: RunConfig, reference) -> float:
    if rc.cutoff_radius is not None:
        return rc.cutoff_radius
    return quantum.auto_cutoff_radius(reference, rc.hbar, rc.sigma)


def _run_optimize_wigner(rc: RunConfig, outdir: Path) -> list:
    state = rc.wigner_state()
    u0 = rc.control_signal()
    reference = integrate_forward(rc.classical_state(), u0, rc.fields,
                                  rc.oc)
    target = quantum.build_target(rc.grid, rc.oc, _cutoff_radius(rc,
                                                                 reference),
                                  reference=reference)
    res = quantum.optimize_quantum(
        state, rc.evolution_spec(), rc.oc, target, u0=u0,
        max_iterations=rc.max_iterations,
        gradient_tolerance=rc.gradient_tolerance, method=rc.method,
        relaxation=rc.relaxation, step0=rc.step0, dt=rc.dt)
    replay = _wigner_forward(rc, res.u)
    payload = {"objective": res.objective, "goal": res.goal,
               "cost": res.cost, "gradient_norm": res.gradient_norm,
               "iterations": res.iterations, "converged": res.converged,
               "stalled": res.stalled,
               "final_moments": _moment_payload(replay.final)}
    return [
        write_control_csv(outdir / "control.csv", res.u),
        write_iteration_log(outdir / "iterations.json", res.history,
                            rc.fingerprint),
        write_diagnostics_csv(outdir / "diagnostics.csv",
                              replay.diagnostics, DIAGNOSTIC_COLUMNS),
        write_state_binary(outdir / "final_state.spnw", replay.final),
        write_json(outdir / "summary.json",
                   _summary(rc, "optimize-wigner", payload)),
    ]


def _run_limit_sweep(rc: RunConfig, outdir: Path) -> list:
    if any(abs(v) > 0 for v in rc.initial_x[1:] + rc.initial_p[1:]):
        raise ConfigurationError(
            "phase-space runs track the first axis only: initial.x and "
            "initial.p components 2 and 3 must be zero")
    sweep = quantum.hbar_sweep(
        rc.oc, rc.fields, x0=rc.initial_x[0], p0=rc.initial_p[0],
        d0=rc.initial_d, sigma=rc.sigma, hbar_list=rc.sweep_hbar,
        grids=rc.sweep_grids, optimize=rc.sweep_optimize, method=rc.method,
        max_iterations=rc.max_iterations,
        gradient_tolerance=rc.gradient_tolerance,
        cutoff_radius=rc.cutoff_radius)
    paths = [
        write_sweep_csv(outdir / "sweep.csv", sweep.records,
                        quantum.SWEEP_COLUMNS),
        write_control_csv(outdir / "classical_control.csv",
                          sweep.classical.u),
    ]
    for member in sweep.members:
        paths.append(write_control_csv(
            outdir / f"control_hbar_{member.hbar:g}.csv", member.result.u))
    payload = {"classical_objective": sweep.classical.objective,
               "rows": list(sweep.records)}
    paths.append(write_json(outdir / "summary.json",
                            _summary(rc, "limit-sweep", payload)))
    return paths


def _run_validate(rc: RunConfig, outdir: Path) -> list:
    report = run_validation(seed=rc.seed)
    payload = {"all_passed": all(c["passed"] for c in report.values()),
               "checks": report}
    return [write_json(outdir / "validation.json",
                       _summary(rc, "validate", payload))]


_RUNNERS = {
    "simulate-classical": _run_simulate_classical,
    "optimize-classical": _run_optimize_classical,
    "simulate-wigner": _run_simulate_wigner,
    "optimize-wigner": _run_optimize_wigner,
    "limit-sweep": _run_limit_sweep,
    "validate": _run_validate,
}


def run(subcommand: str, config: RunConfig, outdir) -> list:
    """Execute one subcommand; returns the artifact paths (manifest last)."""
    if subcommand not in _RUNNERS:
        raise ConfigurationError(f"unknown subcommand {subcommand!r}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = _RUNNERS[subcommand](config, outdir)
    paths.append(write_manifest(outdir, config.fingerprint, paths))
    return paths


def _deepest_module(exc: BaseException) -> str:
    """Name of the innermost package frame that raised, for error reports."""
    name = "spinoc"
    tb = exc.__traceback__
    while tb is not None:
        frame_name = tb.tb_frame.f_globals.get("__name__", "")
        if frame_name.startswith("spinoc"):
            name = frame_name
        tb = tb.tb_next
    return name


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinoc",
        description="spin transport control in the phase-space picture")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="path to a JSON run description "
                        "(omit for built-in defaults)")
    parser.add_argument("--out", help="output directory (default: the "
                        "config's output entry)")
    parser.add_argument("--hbar-list", help="comma-separated override for "
                        "sweep.hbar_list, e.g. 0.4,0.2,0.1")
    parser.add_argument("--seed", type=int, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)

    try:
        if args.config is None:
            raw: dict = {}
        else:
            if not Path(args.config).exists():
                raise ConfigurationError(f"config file {args.config} does "
                                         "not exist")
            raw = dict(load_config(args.config).effective)
        if args.hbar_list is not None:
            try:
                values = [float(tok) for tok in args.hbar_list.split(",")
                          if tok.strip()]
            except ValueError:
                raise ConfigurationError(
                    f"--hbar-list {args.hbar_list!r} is not a comma-"
                    "separated list of numbers")
            raw.setdefault("sweep", {})
            raw["sweep"] = {**raw["sweep"], "hbar_list": values}
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output"] = args.out
        config = load_config(raw)
    except ConfigurationError as exc:
        print(f"spinoc: configuration rejected\n{exc}", file=sys.stderr)
        return 2

    outdir = Path(config.output)
    try:
        paths = run(args.subcommand, config, outdir)
    except SpinocError as exc:
        print(f"spinoc [{_deepest_module(exc)}] (config "
              f"{config.fingerprint[:12]}): {exc}", file=sys.stderr)
        return 1

    print(f"{args.subcommand}: wrote {len(paths)} artifacts to {outdir} "
          f"(config {config.fingerprint[:12]})")
    if args.subcommand == "validate":
        report = json.loads(Path(paths[0]).read_text())
        failed = [k for k, v in report["checks"].items()
                  if not v["passed"]]
        if failed:
            print("failed checks: " + ", ".join(sorted(failed)),
                  file=sys.stderr)
            return 1
        print(f"all {len(report['checks'])} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
