"""Optimal control of the Wigner evolution, and its classical limit.

The objective is J(u) = cost(u) + Phi(u) with the terminal pairing
Phi = <h_T, f(T)> against a fixed four-channel target symbol h_T.  The
symbol encodes the classical design goals as phase-space observables,

    h_T = chi_R(x, p) (nu_x/2 (x - x_T)^2 + nu_p/2 (p - p_T)^2,
                       -nu_d d_T),

smoothly cut off outside the radius-R disk so the symbol stays bounded on
the periodic box.  Because the pairing carries the half-trace weight, the
moment expansion of Phi for a spin-coherent packet of unit mass is

    Phi = nu_x/4 [var_x + (mean_x - x_T)^2]
        + nu_p/4 [var_p + (mean_p - p_T)^2] - nu_d/2 d_T . d_w,

i.e. the classical goal with halved weights plus the variance offsets.  The
matching classical reference problem therefore uses weights nu/2; as hbar
shrinks, the variances vanish and the two problems share their optimality
system.

The evolution generator is skew-adjoint, so the costate solves the same
equation integrated backward from h(T) = h_T, and the gradient density is

    g_i(t) = gamma u_i - gamma' u_i'' + <h(t), Theta-_{phi_i}[f(t)]>.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from .classical import (ClassicalState, ControlSignal, OCConfig,
                        OptimizeResult, cost_value)
from .classical import optimize as optimize_classical
from .classical import _history_row, _second_difference, integrate_forward
from .dynamics import EvolutionResult, EvolutionSpec, cfl_timestep, integrate
from .errors import ConfigurationError, DegenerateProblemError
from .fields import FieldSet, embed_line
from .wigner import (PhaseGrid, WignerState, build_delta_minus,
                     coherent_wigner, inner_stack, moments)


def smooth_bump(r, radius: float):
    """Radial cutoff: 1 inside ``radius``, C-infinity decay to 0 at twice it.

    On the shell the profile is exp(1 - 1/(1 - s^2)) with s = (r - R)/R.
    """
    if radius <= 0:
        raise ConfigurationError("cutoff radius must be positive")
    r = np.asarray(r, dtype=float)
    s = (r - radius) / radius
    out = np.zeros(r.shape)
    out[s <= 0.0] = 1.0
    shell = (s > 0.0) & (s < 1.0)
    ss = s[shell]
    out[shell] = np.exp(1.0 - 1.0 / (1.0 - ss * ss))
    return out


@dataclass(frozen=True)
class TargetSymbol:
    """Terminal pairing symbol with its cutoff radius."""

    grid: PhaseGrid
    data: np.ndarray
    radius: float

    def pair(self, state: WignerState) -> float:
        """Phi = <h_T, f>: the terminal goal value of a state."""
        if state.grid is not self.grid and state.grid != self.grid:
            raise ConfigurationError("state grid does not match the target")
        return inner_stack(self.data, state.data, self.grid)


def packet_widths(hbar: float, sigma: float) -> tuple:
    """Position and momentum standard deviations of the coherent packet."""
    return np.sqrt(hbar * sigma**2 / 2.0), np.sqrt(hbar / (2.0 * sigma**2))


def auto_cutoff_radius(reference, hbar_max: float, sigma: float,
                       safety: float = 1.25, widths: float = 9.0) -> float:
    """Cutoff radius from the classical reference trajectory.

    Takes the largest phase radius the reference reaches, pads it by
    ``widths`` packet standard deviations at the largest hbar of the study
    (the widest envelope), and scales by ``safety``.
    """
    r_traj = float(np.hypot(reference.xs[:, 0], reference.ps[:, 0]).max())
    sx, sp = packet_widths(hbar_max, sigma)
    return safety * (r_traj + widths * max(sx, sp))


def energy_bound_radius(fields: FieldSet, x0: float, p0: float,
                        mass: float = 1.0, span: float = 20.0) -> float:
    """Rough reachability diagnostic from conservation of p^2/2m + U0.

    Ignores the controls and the spin terms, so it only bounds the free
    drift; use it to sanity-check a cutoff radius, not to set one.
    """
    line = np.linspace(-span, span, 4001)
    u_line = fields.u0.value(embed_line(line))
    e0 = p0**2 / (2.0 * mass) + fields.u0.value(embed_line(np.array([x0])))[0]
    reachable = u_line <= e0 + 1e-12
    x_max = float(np.abs(line[reachable]).max()) if reachable.any() else abs(x0)
    p_max = float(np.sqrt(2.0 * mass * max(e0 - u_line.min(), 0.0)))
    return float(np.hypot(x_max, p_max))


def build_target(grid: PhaseGrid, config: OCConfig, radius: float,
                 reference=None) -> TargetSymbol:
    """Assemble the cutoffed target symbol for an OC configuration.

    ``reference`` (a classical trajectory) is checked to stay inside the
    flat region of the cutoff; a symbol whose decay shell does not fit the
    box is allowed but warned about, since the shell then loses smoothness
    at the boundary.
    """
    if reference is not None:
        r_traj = float(np.hypot(reference.xs[:, 0], reference.ps[:, 0]).max())
        if r_traj > radius:
            raise ConfigurationError(
                f"reference trajectory reaches phase radius {r_traj:.3g}, "
                f"outside the flat cutoff region r <= {radius:.3g}")
    box_clearance = min(-grid.x0, grid.x0 + grid.lx, -grid.p0,
                        grid.p0 + grid.lp)
    if 2.0 * radius > box_clearance:
        warnings.warn(
            f"cutoff support radius {2.0 * radius:.3g} exceeds the box "
            f"clearance {box_clearance:.3g}; the symbol is truncated",
            stacklevel=2)
    chi = smooth_bump(np.hypot(grid.xx, grid.pp), radius)
    x_t = config.x_target_vec()[0]
    p_t = config.p_target_vec()[0]
    d_t = config.d_target_vec()
    data = np.empty((4, grid.n_x, grid.n_p))
    data[0] = chi * (0.5 * config.nu_x * (grid.xx - x_t) ** 2
                     + 0.5 * config.nu_p * (grid.pp - p_t) ** 2)
    for k in range(3):
        data[1 + k] = -config.nu_d * d_t[k] * chi
    return TargetSymbol(grid=grid, data=data, radius=radius)


def quantum_objective(u: ControlSignal, config: OCConfig,
                      target: TargetSymbol, final: WignerState) -> float:
    return cost_value(u, config) + target.pair(final)


def _node_dt(config: OCConfig, dt_bound: float) -> float:
    """Largest step that divides the control interval and respects a bound."""
    per_node = max(1, int(np.ceil(config.dt / dt_bound - 1e-12)))
    return config.dt / per_node


def integrate_forward_wigner(state: WignerState, spec: EvolutionSpec,
                             u: ControlSignal, config: OCConfig,
                             dt: Optional[float] = None) -> EvolutionResult:
    """Forward run over the control horizon with snapshots at the nodes."""
    if dt is None:
        bound = float(np.abs(u.values).max()) if u.values.size else 0.0
        dt = cfl_timestep(state.grid, spec.fields, spec.mass, u_bound=bound)
    step = _node_dt(config, dt)
    return integrate(state, spec, t_final=state.time + config.horizon,
                     dt=step, u=u, snapshot_times=state.time + u.times)


def integrate_adjoint_wigner(target: TargetSymbol, spec: EvolutionSpec,
                             hbar: float, u: ControlSignal, config: OCConfig,
                             dt: Optional[float] = None) -> EvolutionResult:
    """Costate run: the same generator integrated backward from h(T) = h_T.

    Snapshots are returned in forward node order.
    """
    if dt is None:
        bound = float(np.abs(u.values).max()) if u.values.size else 0.0
        dt = cfl_timestep(target.grid, spec.fields, spec.mass, u_bound=bound)
    step = _node_dt(config, dt)
    h_start = WignerState(target.grid, target.data.copy(), hbar,
                          time=config.horizon)
    res = integrate(h_start, spec, t_final=0.0, dt=step, u=u,
                    snapshot_times=u.times)
    res.snapshots = res.snapshots[::-1]
    return res


def control_gradient_integral(forward: Sequence[WignerState],
                              adjoint: Sequence[WignerState],
                              fields: FieldSet, hbar: float) -> np.ndarray:
    """<h(t_k), Theta-_{phi_i}[f(t_k)]> on the node grid, shape (N+1, n_c)."""
    if len(forward) != len(adjoint):
        raise ConfigurationError("forward and costate snapshots differ in "
                                 "length")
    grid = forward[0].grid
    dphi = [build_delta_minus(
        lambda xs, s=shape: s.value(embed_line(xs)), grid, hbar)
        for shape in fields.control_basis]
    out = np.empty((len(forward), len(dphi)))
    for k, (f, h) in enumerate(zip(forward, adjoint)):
        if abs(f.time - h.time) > 1e-8 * max(1.0, abs(f.time)):
            raise ConfigurationError("snapshot times are not aligned")
        g = scipy.fft.ifft(f.data, axis=-1)
        for i, d in enumerate(dphi):
            theta = scipy.fft.fft(d * g, axis=-1).real
            out[k, i] = float(np.sum(h.data * theta)) * grid.cell
    return out


def quantum_control_gradient(u: ControlSignal, cgi: np.ndarray,
                             config: OCConfig) -> np.ndarray:
    """Gradient density on the node grid: gamma u - gamma' u'' + CGI."""
    grad = config.gamma * u.values + cgi
    if config.gamma_prime != 0.0:
        grad = grad - config.gamma_prime * _second_difference(u.values,
                                                             config.dt)
    return grad


def optimize_quantum(state: WignerState, spec: EvolutionSpec,
                     config: OCConfig, target: TargetSymbol,
                     u0: Optional[ControlSignal] = None,
                     max_iterations: int = 60,
                     gradient_tolerance: float = 1e-6, method: str = "bvp",
                     relaxation: float = 0.5, step0: float = 1.0,
                     dt: Optional[float] = None) -> OptimizeResult:
    """Minimize cost + <h_T, f(T)> over the control nodes.

    Mirrors the classical optimizer: Armijo-backtracked descent on the
    gradient density, or the relaxed stationarity fixed point (``bvp``).
    The time step is fixed once from the CFL bound at twice the initial
    control amplitude, so all iterations use one discretization of J.
    """
    from .classical import solve_control_bvp
    fields = spec.fields
    if abs(state.time) > 1e-12:
        raise ConfigurationError("control problems start at time zero")
    if fields.n_controls == 0:
        raise DegenerateProblemError("field set exposes no controls")
    if method not in ("gradient", "bvp"):
        raise ConfigurationError(f"unknown method {method!r}")
    if u0 is None:
        u0 = ControlSignal.zeros(config.horizon, config.n_intervals,
                                 fields.n_controls)
    if u0.n_controls != fields.n_controls:
        raise ConfigurationError("control channels do not match the field set")
    if abs(u0.horizon - config.horizon) > 1e-12 * max(1.0, config.horizon):
        raise ConfigurationError("control horizon does not match the problem")
    if dt is None:
        bound = 2.0 * max(1.0, float(np.abs(u0.values).max())
                          if u0.values.size else 0.0)
        dt = cfl_timestep(state.grid, fields, spec.mass, u_bound=bound)
    step = _node_dt(config, dt)

    def forward(u):
        res = integrate(state, spec, t_final=state.time + config.horizon,
                        dt=step, u=u, snapshot_times=state.time + u.times)
        return res, quantum_objective(u, config, target, res.final)

    u = u0.copy()
    fwd, obj = forward(u)
    history = [_history_row(0, obj, target.pair(fwd.final))]
    alpha = step0
    omega = relaxation
    converged = False
    stalled = False
    grad_norm = np.inf
    it = 0

    for it in range(1, max_iterations + 1):
        adj = integrate_adjoint_wigner(target, spec, state.hbar, u, config,
                                       dt=dt)
        cgi = control_gradient_integral(fwd.snapshots, adj.snapshots, fields,
                                        state.hbar)
        grad = quantum_control_gradient(u, cgi, config)
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= gradient_tolerance:
            converged = True
            break

        backtracks = 0
        if method == "gradient":
            gsq = float(np.sum(grad**2))
            accepted = False
            while alpha > 1e-14:
                trial = ControlSignal(u.times, u.values - alpha * grad)
                cand_fwd, cand_obj = forward(trial)
                if cand_obj <= obj - 1e-4 * alpha * gsq:
                    accepted = True
                    break
                alpha *= 0.5
                backtracks += 1
            if not accepted:
                stalled = True
                break
            u, fwd, obj = trial, cand_fwd, cand_obj
            accepted_step = alpha
            alpha = min(alpha * 1.3, 1e6)
        else:
            target_u = solve_control_bvp(-cgi, config)
            accepted = False
            while omega > 1e-10:
                trial = ControlSignal(
                    u.times, (1.0 - omega) * u.values + omega * target_u)
                cand_fwd, cand_obj = forward(trial)
                if cand_obj < obj:
                    accepted = True
                    break
                omega *= 0.5
                backtracks += 1
            if not accepted:
                stalled = True
                break
            u, fwd, obj = trial, cand_fwd, cand_obj
            accepted_step = omega
            omega = min(omega * 1.2, relaxation)
        history.append(_history_row(it, obj, target.pair(fwd.final),
                                    backtracks, grad_norm, accepted_step))

    return OptimizeResult(u=u, objective=obj, goal=target.pair(fwd.final),
                          cost=cost_value(u, config), gradient_norm=grad_norm,
                          iterations=it, converged=converged, stalled=stalled,
                          history=history)


SWEEP_COLUMNS = ("hbar", "J_star", "goal", "cost", "u_dist_to_classical",
                 "err_x", "err_p", "err_d", "var_x_T", "var_p_T")


@dataclass
class SweepMember:
    hbar: float
    grid: PhaseGrid
    result: OptimizeResult
    final: WignerState
    record: dict


@dataclass
class SweepResult:
    classical: OptimizeResult
    classical_trajectory: object
    members: list

    @property
    def records(self) -> list:
        return [m.record for m in self.members]


def _trapezoid_weights(n_nodes: int) -> np.ndarray:
    w = np.ones(n_nodes)
    w[0] = w[-1] = 0.5
    return w


def hbar_sweep(config: OCConfig, fields: FieldSet, x0: float, p0: float,
               d0, sigma: float, hbar_list: Sequence[float],
               grids: Sequence[PhaseGrid], optimize: bool = True,
               method: str = "bvp", max_iterations: int = 60,
               gradient_tolerance: float = 1e-5,
               cutoff_radius: Optional[float] = None) -> SweepResult:
    """Solve the control problem across hbar values against one classical
    reference.

    The reference solves the classical problem with halved terminal weights
    (the quantum pairing carries the half-trace normalization).  Members run
    from largest to smallest hbar, warm-starting each optimization from the
    previous optimum; with ``optimize`` false every member just replays the
    classical optimal control.  Records follow ``SWEEP_COLUMNS``.
    """
    if len(hbar_list) != len(grids):
        raise ConfigurationError("one grid per hbar value is required")
    if len(hbar_list) > 1 and not all(
            a > b for a, b in zip(hbar_list, hbar_list[1:])):
        raise ConfigurationError("hbar values must be strictly decreasing")
    d0 = np.asarray(d0, dtype=float)

    half = replace(config, nu_x=config.nu_x / 2.0, nu_p=config.nu_p / 2.0,
                   nu_d=config.nu_d / 2.0)
    state_cl = ClassicalState(x=(x0, 0.0, 0.0), p=(p0, 0.0, 0.0), d=tuple(d0))
    ref = optimize_classical(state_cl, fields, half, method=method,
                             max_iterations=200,
                             gradient_tolerance=gradient_tolerance)
    traj = integrate_forward(state_cl, ref.u, fields, half)
    if cutoff_radius is None:
        cutoff_radius = auto_cutoff_radius(traj, max(hbar_list), sigma)

    weights = _trapezoid_weights(config.n_intervals + 1) * config.dt
    members = []
    warm = None
    for hbar, grid in zip(hbar_list, grids):
        spec = EvolutionSpec(fields=fields, mass=config.mass, mode="full")
        start = coherent_wigner(grid, hbar, xbar=x0, pbar=p0, sigma=sigma,
                                dbar=tuple(d0))
        symbol = build_target(grid, config, cutoff_radius, reference=traj)
        if optimize:
            u_init = warm if warm is not None else ref.u
            res = optimize_quantum(start, spec, config, symbol,
                                   u0=u_init.copy(),
                                   max_iterations=max_iterations,
                                   gradient_tolerance=gradient_tolerance,
                                   method=method)
            warm = res.u
            fwd = integrate_forward_wigner(start, spec, res.u, config)
        else:
            fwd = integrate_forward_wigner(start, spec, ref.u, config)
            res = OptimizeResult(
                u=ref.u.copy(), objective=quantum_objective(
                    ref.u, config, symbol, fwd.final),
                goal=symbol.pair(fwd.final),
                cost=cost_value(ref.u, config), gradient_norm=np.nan,
                iterations=0, converged=False, stalled=False,
                history=[])
        m = moments(fwd.final)
        du = res.u.values - ref.u.values
        u_dist = float(np.sqrt(np.sum(weights[:, None] * du**2)))
        x_cl = traj.final_state.x
        p_cl = traj.final_state.p
        d_cl = traj.final_state.d
        record = {
            "hbar": hbar,
            "J_star": res.objective,
            "goal": res.goal,
            "cost": res.cost,
            "u_dist_to_classical": u_dist,
            "err_x": abs(m.mean_x - x_cl[0]),
            "err_p": abs(m.mean_p - p_cl[0]),
            "err_d": float(np.linalg.norm(np.asarray(m.spin) - d_cl)),
            "var_x_T": m.var_x,
            "var_p_T": m.var_p,
        }
        members.append(SweepMember(hbar=hbar, grid=grid, result=res,
                                   final=fwd.final, record=record))
    return SweepResult(classical=ref, classical_trajectory=traj,
                       members=members)
