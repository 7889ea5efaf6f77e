"""Run configuration: one JSON document describing a complete experiment.

A run file has seven blocks (every key optional, defaults below):

* ``fields``     field catalog passed to :func:`fieldset_from_config`
* ``oc``         horizon, interval count, cost weights and targets
* ``grid``       phase-space box and node counts (powers of two)
* ``evolution``  rhs mode, step size (null = CFL bound) and sample cadence
* ``initial``    classical point (x, p, d) plus the packet width sigma
* ``optimizer``  descent method, iteration budget, tolerances
* ``sweep``      hbar ladder for the semiclassical-limit study

plus scalars ``hbar``, ``seed`` and ``output``.  ``load_config`` validates
the whole document before any object is built and reports every violation
at once, naming the offending field; a syntactically broken file is
reported with the parse line and column.  Cross-field checks happen at the
same time: an explicit time step is compared against the CFL bound of the
configured grid and fields, and the initial coherent envelope (six standard
deviations each way) must fit inside the box, else the error suggests a
sufficient box length.

The fingerprint of a config is the SHA-256 of its canonical effective JSON
(defaults filled in, keys sorted); run artifacts embed it so outputs can be
matched to the exact inputs that produced them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .classical import ClassicalState, ControlSignal, OCConfig
from .dynamics import MODES, EvolutionSpec, cfl_timestep
from .errors import ConfigurationError
from .fields import FieldSet, fieldset_from_config
from .wigner import PhaseGrid, WignerState, coherent_wigner

__all__ = ["RunConfig", "load_config", "config_fingerprint", "DEFAULTS"]

ENVELOPE_SIGMAS = 6.0

DEFAULTS: dict = {
    "hbar": 0.25,
    "seed": 1,
    "output": "spinoc-out",
    "fields": {
        "potential": {"kind": "harmonic", "amplitude": 0.5},
        "control_basis": [{"kind": "linear", "slope": [1.0, 0.0, 0.0]}],
        "magnetic": {"kind": "uniform", "value": [0.1, 0.0, 0.3]},
        "rashba": {"kind": "uniform", "value": [0.0, 0.4, 0.2]},
    },
    "oc": {
        "horizon": 0.6,
        "n_intervals": 40,
        "mass": 1.0,
        "gamma": 0.4,
        "gamma_prime": 0.05,
        "nu_x": 0.8,
        "nu_p": 0.6,
        "nu_d": 0.4,
        "x_target": [0.5, 0.0, 0.0],
        "p_target": None,
        "d_target": [0.0, 0.0, 1.0],
    },
    "grid": {"n_x": 64, "n_p": 64, "x0": -6.0, "lx": 12.0,
             "p0": -6.0, "lp": 12.0},
    "evolution": {"mode": "full", "dt": None, "sample_every": 10},
    "initial": {"x": [-0.5, 0.0, 0.0], "p": [0.3, 0.0, 0.0],
                "d": [0.0, 0.0, 1.0], "sigma": 1.0},
    "control": {"values": None},
    "optimizer": {"method": "bvp", "max_iterations": 60,
                  "gradient_tolerance": 1e-5, "relaxation": 0.5,
                  "step0": 1.0},
    "sweep": {"hbar_list": [0.4, 0.2, 0.1, 0.05], "grid_list": None,
              "optimize": True, "cutoff_radius": None},
}


def _merge(base, override, path, violations):
    """Deep-merge override into a copy of base; unknown keys are violations."""
    out = {}
    for key, val in base.items():
        out[key] = val
    for key, val in override.items():
        if key not in base:
            violations.append(f"unknown key {_join(path, key)!r}")
            continue
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, _join(path, key), violations)
        else:
            out[key] = val
    return out


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _is_power_of_two(n) -> bool:
    return isinstance(n, int) and not isinstance(n, bool) and n > 0 \
        and (n & (n - 1)) == 0


def _number(cfg, block, key, violations, *, integer=False, positive=False,
            nonnegative=False, allow_none=False):
    name = _join(block, key)
    val = cfg[key]
    if val is None:
        if allow_none:
            return None
        violations.append(f"{name} may not be null")
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        kind = "an integer" if integer else "a number"
        violations.append(f"{name} = {val!r} is not {kind}")
        return None
    if integer and not isinstance(val, int):
        violations.append(f"{name} = {val!r} is not an integer")
        return None
    if not math.isfinite(val):
        violations.append(f"{name} = {val!r} is not finite")
        return None
    if positive and val <= 0:
        violations.append(f"{name} = {val!r} must be positive")
        return None
    if nonnegative and val < 0:
        violations.append(f"{name} = {val!r} must be nonnegative")
        return None
    return int(val) if integer else float(val)


def _vec3(cfg, block, key, violations, *, allow_none=False):
    name = _join(block, key)
    val = cfg[key]
    if val is None:
        if allow_none:
            return None
        violations.append(f"{name} may not be null")
        return None
    if (not isinstance(val, (list, tuple)) or len(val) != 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   or not math.isfinite(v) for v in val)):
        violations.append(f"{name} = {val!r} is not a 3-vector of finite "
                          "numbers")
        return None
    return tuple(float(v) for v in val)


def _choice(cfg, block, key, options, violations):
    name = _join(block, key)
    val = cfg[key]
    if val not in options:
        violations.append(f"{name} = {val!r} is not one of {sorted(options)}")
        return None
    return val


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully-defaulted description of one run.

    Construct through :func:`load_config`; the constructor performs no
    checking of its own.  ``effective`` is the canonical JSON-compatible
    dict (defaults filled) and ``fingerprint`` its SHA-256 hex digest.
    """

    fields: FieldSet
    oc: OCConfig
    grid: PhaseGrid
    hbar: float
    mode: str
    dt: Optional[float]
    sample_every: int
    initial_x: tuple
    initial_p: tuple
    initial_d: tuple
    sigma: float
    control_values: Optional[tuple]
    method: str
    max_iterations: int
    gradient_tolerance: float
    relaxation: float
    step0: float
    sweep_hbar: tuple
    sweep_grids: tuple
    sweep_optimize: bool
    cutoff_radius: Optional[float]
    seed: int
    output: str
    effective: dict
    fingerprint: str

    def classical_state(self) -> ClassicalState:
        return ClassicalState(x=self.initial_x, p=self.initial_p,
                              d=self.initial_d)

    def wigner_state(self) -> WignerState:
        """Coherent packet on the tracked line; the transverse position and
        momentum components must vanish for a phase-space run."""
        if any(abs(v) > 0 for v in self.initial_x[1:] + self.initial_p[1:]):
            raise ConfigurationError(
                "phase-space runs track the first axis only: initial.x and "
                "initial.p components 2 and 3 must be zero")
        return coherent_wigner(self.grid, self.hbar, xbar=self.initial_x[0],
                               pbar=self.initial_p[0], sigma=self.sigma,
                               dbar=self.initial_d)

    def control_signal(self) -> ControlSignal:
        if self.control_values is None:
            return ControlSignal.zeros(self.oc.horizon, self.oc.n_intervals,
                                       self.fields.n_controls)
        return ControlSignal(
            times=np.linspace(0.0, self.oc.horizon, self.oc.n_intervals + 1),
            values=np.asarray(self.control_values, dtype=float))

    def evolution_spec(self) -> EvolutionSpec:
        return EvolutionSpec(fields=self.fields, mass=self.oc.mass,
                             mode=self.mode)


def config_fingerprint(effective: dict) -> str:
    """SHA-256 of the canonical effective config.  The output directory is
    a filesystem detail, not an input to the computation, so it is left
    out: the same physics written to two places shares one fingerprint."""
    canon = {k: v for k, v in effective.items() if k != "output"}
    return hashlib.sha256(
        json.dumps(canon, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _validate_grid_block(block, label, violations):
    for key in ("n_x", "n_p"):
        val = block[key]
        if not _is_power_of_two(val):
            violations.append(
                f"{label}.{key} = {val!r} is not a power of two")
    _number(block, label, "x0", violations)
    _number(block, label, "p0", violations)
    _number(block, label, "lx", violations, positive=True)
    _number(block, label, "lp", violations, positive=True)


def _check_envelope(grid_block, hbar, initial, label, violations):
    """Six-sigma support of the initial packet must fit in the box."""
    sigma = initial.get("sigma")
    if not isinstance(sigma, (int, float)) or isinstance(sigma, bool) \
            or sigma <= 0 or hbar is None or hbar <= 0:
        return
    xbar = initial["x"][0] if isinstance(initial.get("x"), (list, tuple)) \
        and len(initial["x"]) == 3 else None
    pbar = initial["p"][0] if isinstance(initial.get("p"), (list, tuple)) \
        and len(initial["p"]) == 3 else None
    if xbar is None or pbar is None:
        return
    sig_x = math.sqrt(hbar / 2.0) * sigma
    sig_p = math.sqrt(hbar / 2.0) / sigma
    for (axis, center, sig, lo, length, key) in (
            ("x", xbar, sig_x, grid_block["x0"], grid_block["lx"], "lx"),
            ("p", pbar, sig_p, grid_block["p0"], grid_block["lp"], "lp")):
        if not isinstance(lo, (int, float)) or not isinstance(length,
                                                              (int, float)):
            continue
        low = center - ENVELOPE_SIGMAS * sig
        high = center + ENVELOPE_SIGMAS * sig
        if low < lo or high > lo + length:
            need = 2.0 * max(high - (lo + length / 2.0),
                             (lo + length / 2.0) - low)
            violations.append(
                f"initial envelope exceeds box in {axis} for hbar = "
                f"{hbar:g}: six-sigma support [{low:.3g}, {high:.3g}] "
                f"outside [{lo:g}, {lo + length:g}]; increase "
                f"{label}.{key} to at least {need:.3g} (box centered as "
                "now) or recenter the packet")


def load_config(source: Union[str, Path, dict, None] = None) -> RunConfig:
    """Parse, default-fill and validate a run description.

    ``source`` may be a path to a JSON file, an already-parsed dict, or
    None for the built-in defaults.  Raises :class:`ConfigurationError`
    listing every violation found (attribute ``violations`` carries them
    as a list); a malformed file reports the parse position instead.
    """
    if source is None:
        raw: dict = {}
    elif isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(
                f"config file {source} is not valid JSON: {exc.msg} at "
                f"line {exc.lineno}, column {exc.colno}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(
                f"config file {source} must hold a JSON object, got "
                f"{type(raw).__name__}")

    violations: list = []
    cfg = _merge(DEFAULTS, raw, "", violations)

    hbar = _number(cfg, "", "hbar", violations, positive=True)
    seed = _number(cfg, "", "seed", violations, integer=True,
                   nonnegative=True)
    output = cfg["output"]
    if not isinstance(output, str) or not output:
        violations.append(f"output = {output!r} is not a directory name")

    oc_block = cfg["oc"]
    horizon = _number(oc_block, "oc", "horizon", violations, positive=True)
    n_intervals = _number(oc_block, "oc", "n_intervals", violations,
                          integer=True, positive=True)
    _number(oc_block, "oc", "mass", violations, positive=True)
    for key in ("gamma", "gamma_prime", "nu_x", "nu_p", "nu_d"):
        _number(oc_block, "oc", key, violations, nonnegative=True)
    _vec3(oc_block, "oc", "x_target", violations)
    _vec3(oc_block, "oc", "p_target", violations, allow_none=True)
    _vec3(oc_block, "oc", "d_target", violations)

    _validate_grid_block(cfg["grid"], "grid", violations)

    evo = cfg["evolution"]
    mode = _choice(evo, "evolution", "mode", MODES, violations)
    dt = _number(evo, "evolution", "dt", violations, positive=True,
                 allow_none=True)
    _number(evo, "evolution", "sample_every", violations, integer=True,
            positive=True)

    init = cfg["initial"]
    _vec3(init, "initial", "x", violations)
    _vec3(init, "initial", "p", violations)
    dvec = _vec3(init, "initial", "d", violations)
    if dvec is not None and np.linalg.norm(dvec) > 1.0 + 1e-12:
        violations.append(
            f"initial.d = {list(dvec)} has norm {np.linalg.norm(dvec):.6f}"
            " > 1 (not a Bloch vector)")
    _number(init, "initial", "sigma", violations, positive=True)

    opt = cfg["optimizer"]
    _choice(opt, "optimizer", "method", ("gradient", "bvp"), violations)
    _number(opt, "optimizer", "max_iterations", violations, integer=True,
            positive=True)
    _number(opt, "optimizer", "gradient_tolerance", violations,
            positive=True)
    relax = _number(opt, "optimizer", "relaxation", violations,
                    positive=True)
    if relax is not None and relax > 1.0:
        violations.append(f"optimizer.relaxation = {relax!r} must lie in "
                          "(0, 1]")
    _number(opt, "optimizer", "step0", violations, positive=True)

    sweep = cfg["sweep"]
    hlist = sweep["hbar_list"]
    if (not isinstance(hlist, (list, tuple)) or not hlist
            or any(isinstance(h, bool) or not isinstance(h, (int, float))
                   or h <= 0 for h in hlist)):
        violations.append(f"sweep.hbar_list = {hlist!r} is not a nonempty "
                          "list of positive numbers")
        hlist = None
    elif any(b >= a for a, b in zip(hlist, hlist[1:])):
        violations.append(f"sweep.hbar_list = {list(hlist)} must decrease "
                          "strictly")
    glist = sweep["grid_list"]
    if glist is not None:
        if not isinstance(glist, (list, tuple)) or (
                hlist is not None and len(glist) != len(hlist)):
            violations.append(
                "sweep.grid_list must be null or one grid block per entry "
                "of sweep.hbar_list")
            glist = None
        else:
            checked = []
            for i, entry in enumerate(glist):
                if not isinstance(entry, dict):
                    violations.append(f"sweep.grid_list[{i}] is not a grid "
                                      "block")
                    continue
                sub: list = []
                merged = _merge(DEFAULTS["grid"], entry,
                                f"sweep.grid_list[{i}]", sub)
                _validate_grid_block(merged, f"sweep.grid_list[{i}]", sub)
                violations.extend(sub)
                if not sub:
                    checked.append(merged)
            glist = checked if len(checked) == len(glist) else None
    if not isinstance(sweep["optimize"], bool):
        violations.append(f"sweep.optimize = {sweep['optimize']!r} is not "
                          "a boolean")
    _number(sweep, "sweep", "cutoff_radius", violations, positive=True,
            allow_none=True)

    fields = None
    try:
        fields = fieldset_from_config(cfg["fields"])
    except (ConfigurationError, TypeError, ValueError) as exc:
        violations.append(f"fields: {exc}")

    cvals = cfg["control"]["values"]
    if cvals is not None:
        arr = None
        try:
            arr = np.asarray(cvals, dtype=float)
        except (TypeError, ValueError):
            violations.append("control.values is not a numeric array")
        if arr is not None and fields is not None and n_intervals is not None:
            want = (n_intervals + 1, fields.n_controls)
            if arr.ndim != 2 or arr.shape != want:
                violations.append(
                    f"control.values has shape {arr.shape if arr.ndim else 'scalar'},"
                    f" expected {want} (n_intervals + 1 rows, one column per"
                    " control)")
            elif not np.all(np.isfinite(arr)):
                violations.append("control.values contains non-finite "
                                  "entries")
            else:
                cvals = tuple(tuple(row) for row in arr)

    if mode == "uniform" and fields is not None \
            and not fields.uniform_rashba_zeeman():
        violations.append(
            "evolution.mode = 'uniform' requires spatially uniform magnetic"
            " and spin-orbit fields")

    # cross-field checks that need numbers validated above
    if not violations:
        _check_envelope(cfg["grid"], hbar, init, "grid", violations)
        if hlist is not None:
            for i, hb in enumerate(hlist):
                block = glist[i] if glist else cfg["grid"]
                label = f"sweep.grid_list[{i}]" if glist else "grid"
                _check_envelope(block, hb, init, label, violations)

    grid = None
    if not violations:
        g = cfg["grid"]
        grid = PhaseGrid(n_x=g["n_x"], n_p=g["n_p"], x0=float(g["x0"]),
                         lx=float(g["lx"]), p0=float(g["p0"]),
                         lp=float(g["lp"]))
        if dt is not None:
            bound_u = 2.0 * max(
                1.0, float(np.abs(cvals).max()) if cvals else 0.0)
            bound = cfl_timestep(grid, fields, oc_block["mass"],
                                 u_bound=bound_u)
            if dt > bound:
                violations.append(
                    f"evolution.dt = {dt:g} exceeds the CFL bound "
                    f"{bound:.6g} of this grid and field set (assumed "
                    f"control sup-norm {bound_u:g})")

    if violations:
        err = ConfigurationError(
            "configuration has {} violation{}:\n  ".format(
                len(violations), "" if len(violations) == 1 else "s")
            + "\n  ".join(violations))
        err.violations = violations
        raise err

    oc = OCConfig(horizon=horizon, n_intervals=n_intervals,
                  mass=float(oc_block["mass"]),
                  gamma=float(oc_block["gamma"]),
                  gamma_prime=float(oc_block["gamma_prime"]),
                  nu_x=float(oc_block["nu_x"]), nu_p=float(oc_block["nu_p"]),
                  nu_d=float(oc_block["nu_d"]),
                  x_target=tuple(oc_block["x_target"]),
                  p_target=None if oc_block["p_target"] is None
                  else tuple(oc_block["p_target"]),
                  d_target=tuple(oc_block["d_target"]))

    sweep_grids = tuple(
        PhaseGrid(n_x=b["n_x"], n_p=b["n_p"], x0=float(b["x0"]),
                  lx=float(b["lx"]), p0=float(b["p0"]), lp=float(b["lp"]))
        for b in (glist if glist else [cfg["grid"]] * len(hlist)))

    effective = json.loads(json.dumps(cfg))  # deep copy, JSON-canonical
    return RunConfig(
        fields=fields, oc=oc, grid=grid, hbar=hbar, mode=mode, dt=dt,
        sample_every=evo["sample_every"],
        initial_x=tuple(init["x"]), initial_p=tuple(init["p"]),
        initial_d=tuple(init["d"]), sigma=float(init["sigma"]),
        control_values=cvals, method=opt["method"],
        max_iterations=opt["max_iterations"],
        gradient_tolerance=float(opt["gradient_tolerance"]),
        relaxation=float(opt["relaxation"]), step0=float(opt["step0"]),
        sweep_hbar=tuple(float(h) for h in hlist),
        sweep_grids=sweep_grids,
        sweep_optimize=bool(sweep["optimize"]),
        cutoff_radius=sweep["cutoff_radius"], seed=seed, output=output,
        effective=effective, fingerprint=config_fingerprint(effective))
