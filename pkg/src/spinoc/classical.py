"""Deterministic limit model: spin characteristics and their optimal control.

The state is a point (x, p, d) with x, p in R^3 and d the Bloch vector,
moving under

    dx/dt = p / m
    dp/dt = E(x, u) = -grad U(x, u)
    dd/dt = 2 (p ^ K(x) - B(x)) ^ d

with piecewise-linear controls on a uniform time grid.  The adjoint system
integrated here is the closed (xh, ph, eta) reduction: eta carries d ^ lambda_d,
so the spin costate's component along d, which never enters the gradient,
is not propagated.

Discrete conventions chosen so the analytic gradient is the exact derivative
of the discrete cost where possible: the control cost pairs a trapezoid rule
for the gamma term with a sum of squared node differences for the gamma'
term, and the gradient's second-difference stencil uses reflecting ghosts
(natural boundary conditions du/dt = 0 at both ends).  The remaining gap
against finite differences of the full objective is the O(dt^2) hat-function
smoothing of the tracking term.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .errors import ConfigurationError, DegenerateProblemError
from .fields import FieldSet, pack_scalar, pack_vector

FORWARD_SUBSTEPS = 4
ADJOINT_SUBSTEPS = 2


def _vec3(v, name) -> np.ndarray:
    out = np.asarray(v, dtype=float)
    if out.shape != (3,):
        raise ConfigurationError(f"{name} must be a 3-vector, got {out.shape}")
    return out


@dataclass
class ClassicalState:
    """Phase-space point with Bloch vector; |d| may not exceed 1."""

    x: np.ndarray
    p: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.x = _vec3(self.x, "x")
        self.p = _vec3(self.p, "p")
        self.d = _vec3(self.d, "d")
        # The slack must sit above the advertised |d|-conservation drift of
        # the integrators, whose evolved endpoints pass through here too.
        excess = np.linalg.norm(self.d) - 1.0
        if excess > 1e-6:
            raise ConfigurationError(
                f"|d| = 1 + {excess:.3e} exceeds 1")


@dataclass
class AdjointState:
    xh: np.ndarray
    ph: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.xh = _vec3(self.xh, "xh")
        self.ph = _vec3(self.ph, "ph")
        self.eta = _vec3(self.eta, "eta")


@dataclass
class ControlSignal:
    """Controls on a uniform node grid; values has shape (n_nodes, n_controls)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ConfigurationError("need at least two control nodes")
        if self.values.ndim != 2 or self.values.shape[0] != self.times.size:
            raise ConfigurationError(
                f"values shape {self.values.shape} does not match "
                f"{self.times.size} nodes")
        steps = np.diff(self.times)
        if steps.min() <= 0 or not np.allclose(steps, steps[0], rtol=1e-10):
            raise ConfigurationError("control nodes must be uniform and increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, horizon: float, n_intervals: int, n_controls: int) -> "ControlSignal":
        times = np.linspace(0.0, horizon, n_intervals + 1)
        return cls(times=times, values=np.zeros((n_intervals + 1, n_controls)))

    def copy(self) -> "ControlSignal":
        return ControlSignal(self.times.copy(), self.values.copy())


@dataclass(frozen=True)
class OCConfig:
    """Weights and horizon of one optimal-control problem.

    ``p_target = None`` penalizes |p(T)|^2 itself (drive the particle to
    rest); a vector asks for p(T) near that vector instead.
    """

    horizon: float
    n_intervals: int
    mass: float = 1.0
    gamma: float = 1.0
    gamma_prime: float = 0.0
    nu_x: float = 0.0
    nu_p: float = 0.0
    nu_d: float = 0.0
    x_target: tuple = (0.0, 0.0, 0.0)
    p_target: Optional[tuple] = None
    d_target: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigurationError("horizon must be positive")
        if self.n_intervals < 1:
            raise ConfigurationError("need at least one control interval")
        if self.mass <= 0:
            raise ConfigurationError("mass must be positive")
        for name in ("gamma", "gamma_prime", "nu_x", "nu_p", "nu_d"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_intervals

    def x_target_vec(self) -> np.ndarray:
        return np.asarray(self.x_target, dtype=float)

    def p_target_vec(self) -> np.ndarray:
        if self.p_target is None:
            return np.zeros(3)
        return np.asarray(self.p_target, dtype=float)

    def d_target_vec(self) -> np.ndarray:
        return np.asarray(self.d_target, dtype=float)


@dataclass
class ClassicalTrajectory:
    """Forward solution sampled on the quarter grid (row 4k = node k)."""

    times: np.ndarray
    xs: np.ndarray
    ps: np.ndarray
    ds: np.ndarray
    u: ControlSignal
    fields: FieldSet
    config: OCConfig

    @property
    def final_state(self) -> ClassicalState:
        return ClassicalState(self.xs[-1].copy(), self.ps[-1].copy(),
                              self.ds[-1].copy())

    def node_view(self):
        """(xs, ps, ds) restricted to control nodes."""
        return self.xs[::FORWARD_SUBSTEPS], self.ps[::FORWARD_SUBSTEPS], \
            self.ds[::FORWARD_SUBSTEPS]


@dataclass
class AdjointTrajectory:
    """Adjoint solution sampled on the half grid (row 2k = node k)."""

    times: np.ndarray
    xhs: np.ndarray
    phs: np.ndarray
    etas: np.ndarray

    def node_view(self):
        return self.xhs[::ADJOINT_SUBSTEPS], self.phs[::ADJOINT_SUBSTEPS], \
            self.etas[::ADJOINT_SUBSTEPS]


@lru_cache(maxsize=64)
def _packed_fields(fields: FieldSet):
    uc, up = pack_scalar(fields.u0)
    n_c = fields.n_controls
    ccodes = np.empty(n_c, dtype=np.int64)
    cpars = np.empty((n_c, up.size))
    for i, shape in enumerate(fields.control_basis):
        ccodes[i], cpars[i] = pack_scalar(shape)
    bcode, bpar = pack_vector(fields.magnetic)
    kcode, kpar = pack_vector(fields.rashba)
    return uc, up, ccodes, cpars, bcode, bpar, kcode, kpar


def _check_compatible(u: ControlSignal, fields: FieldSet, config: OCConfig):
    if u.n_controls != fields.n_controls:
        raise ConfigurationError(
            f"control signal has {u.n_controls} channels, field set expects "
            f"{fields.n_controls}")
    if u.times.size != config.n_intervals + 1:
        raise ConfigurationError(
            f"control grid has {u.times.size} nodes, config asks for "
            f"{config.n_intervals + 1}")
    if not np.isclose(u.horizon, config.horizon, rtol=1e-10):
        raise ConfigurationError("control horizon differs from config horizon")


def integrate_forward(state: ClassicalState, u: ControlSignal,
                      fields: FieldSet, config: OCConfig) -> ClassicalTrajectory:
    """Quarter-grid RK4 solve of the characteristics under the given control."""
    _check_compatible(u, fields, config)
    packed = _packed_fields(fields)
    xs, ps, ds = _kernels.rk4_forward(state.x, state.p, state.d, u.values,
                                      config.dt, config.mass, *packed)
    times = np.linspace(0.0, config.horizon,
                        FORWARD_SUBSTEPS * config.n_intervals + 1)
    return ClassicalTrajectory(times=times, xs=xs, ps=ps, ds=ds, u=u.copy(),
                               fields=fields, config=config)


def terminal_adjoint(state: ClassicalState, config: OCConfig) -> AdjointState:
    """Transversality data at t = T for the reduced adjoint variables."""
    p_term = state.p if config.p_target is None \
        else state.p - config.p_target_vec()
    xh = -config.nu_p * p_term
    ph = config.nu_x * (config.x_target_vec() - state.x)
    eta = config.nu_d * np.cross(config.d_target_vec(), state.d)
    return AdjointState(xh=xh, ph=ph, eta=eta)


def integrate_adjoint(traj: ClassicalTrajectory) -> AdjointTrajectory:
    """Backward half-grid RK4 solve of the adjoint system along ``traj``."""
    config = traj.config
    packed = _packed_fields(traj.fields)
    fin = terminal_adjoint(traj.final_state, config)
    xhs, phs, etas = _kernels.rk4_adjoint(traj.xs, traj.ps, traj.u.values,
                                          config.dt, config.mass, *packed,
                                          fin.xh, fin.ph, fin.eta)
    times = np.linspace(0.0, config.horizon,
                        ADJOINT_SUBSTEPS * config.n_intervals + 1)
    return AdjointTrajectory(times=times, xhs=xhs, phs=phs, etas=etas)


def goal_value(state: ClassicalState, config: OCConfig) -> float:
    """Terminal goal: nu_x/2 |x - x_T|^2 + nu_p/2 |p - p_T|^2 - nu_d d . d_T
    (with p_T = 0 in the rest-penalty mode)."""
    dx = state.x - config.x_target_vec()
    dp = state.p - (np.zeros(3) if config.p_target is None
                    else config.p_target_vec())
    return float(0.5 * config.nu_x * dx @ dx + 0.5 * config.nu_p * dp @ dp
                 - config.nu_d * state.d @ config.d_target_vec())


def cost_value(u: ControlSignal, config: OCConfig) -> float:
    """Control cost: gamma/2 int |u|^2 (trapezoid) + gamma'/2 int |du/dt|^2
    (exact for the piecewise-linear interpolant)."""
    dt = u.dt
    w = np.ones(u.times.size)
    w[0] = w[-1] = 0.5
    quad = float(np.sum(w[:, None] * u.values**2) * dt)
    diff = np.diff(u.values, axis=0)
    slope = float(np.sum(diff**2) / dt)
    return 0.5 * config.gamma * quad + 0.5 * config.gamma_prime * slope


def objective_value(traj: ClassicalTrajectory) -> float:
    return goal_value(traj.final_state, traj.config) + cost_value(traj.u,
                                                                  traj.config)


def _second_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Nodal d2u/dt2 with reflecting ghosts (natural boundary conditions)."""
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dt**2
    out[0] = 2.0 * (values[1] - values[0]) / dt**2
    out[-1] = 2.0 * (values[-2] - values[-1]) / dt**2
    return out


def control_gradient(traj: ClassicalTrajectory,
                     adj: AdjointTrajectory) -> np.ndarray:
    """Gradient density g_i(t_k) = gamma u - gamma' u'' - xh . dE/du_i.

    The last term is + xh . grad phi_i(x(t_k)) since E is affine with slope
    -grad phi_i.  The node derivative of the discrete objective is
    dt w_k g_i(t_k) with trapezoid weights w_k.
    """
    config = traj.config
    u = traj.u
    xs_nodes = traj.xs[::FORWARD_SUBSTEPS]
    xh_nodes = adj.xhs[::ADJOINT_SUBSTEPS]
    grad = config.gamma * u.values \
        - config.gamma_prime * _second_difference(u.values, u.dt)
    for i, shape in enumerate(traj.fields.control_basis):
        grad[:, i] += np.sum(shape.grad(xs_nodes) * xh_nodes, axis=1)
    return grad


def solve_control_bvp(rhs: np.ndarray, config: OCConfig) -> np.ndarray:
    """Solve gamma u - gamma' u'' = rhs on the node grid, natural BCs.

    Uses the same ghost-reflected second difference as the gradient, so a
    fixed point of u -> solve(-tracking term) has exactly zero gradient
    density.  gamma' = 0 reduces to pointwise division; gamma = 0 solves the
    singular Neumann problem in the least-squares sense.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if n != config.n_intervals + 1:
        raise ConfigurationError("rhs rows do not match the control grid")
    g, gp = config.gamma, config.gamma_prime
    if g == 0.0 and gp == 0.0:
        raise DegenerateProblemError(
            "both control weights vanish; the stationarity system is empty")
    if gp == 0.0:
        return rhs / g
    dt2 = config.dt**2
    r = gp / dt2
    if g == 0.0:
        dense = np.zeros((n, n))
        idx = np.arange(n)
        dense[idx, idx] = 2.0 * r
        dense[idx[:-1], idx[:-1] + 1] = -r
        dense[idx[1:], idx[1:] - 1] = -r
        dense[0, 1] = -2.0 * r
        dense[-1, -2] = -2.0 * r
        sol, *_ = np.linalg.lstsq(dense, rhs, rcond=None)
        return sol
    band = np.zeros((3, n))
    band[0, 1:] = -r
    band[0, 1] = -2.0 * r
    band[1, :] = g + 2.0 * r
    band[2, :-1] = -r
    band[2, -2] = -2.0 * r
    return solve_banded((1, 1), band, rhs)


@dataclass
class OptimizeResult:
    """Outcome of an optimize run.

    ``history`` holds one dict per accepted iterate (including the starting
    point) with keys iteration, J, goal, backtracks, grad_sup and step; the
    two None entries on row zero mark quantities that only exist once a step
    has been taken.
    """

    u: ControlSignal
    objective: float
    goal: float
    cost: float
    gradient_norm: float
    iterations: int
    converged: bool
    stalled: bool
    history: list = dc_field(default_factory=list)


def _history_row(iteration, obj, goal, backtracks=0, grad_sup=None,
                 step=None):
    return {"iteration": iteration, "J": float(obj), "goal": float(goal),
            "backtracks": backtracks,
            "grad_sup": None if grad_sup is None else float(grad_sup),
            "step": None if step is None else float(step)}


def _forward_objective(state, values, template: ControlSignal, fields, config):
    u = ControlSignal(template.times, values)
    traj = integrate_forward(state, u, fields, config)
    return traj, objective_value(traj)


def optimize(state: ClassicalState, fields: FieldSet, config: OCConfig,
             u0: Optional[ControlSignal] = None, max_iterations: int = 200,
             gradient_tolerance: float = 1e-6, method: str = "gradient",
             relaxation: float = 0.5, step0: float = 1.0) -> OptimizeResult:
    """Minimize goal + control cost over node values of u.

    method "gradient": Armijo-backtracked steepest descent on the gradient
    density (a positive diagonal scaling of the true node gradient, so every
    accepted step decreases the objective).  method "bvp": relaxed fixed-point
    iteration u <- (1-w) u + w G(u) where G solves the stationarity system
    with the tracking term frozen; falls back to halving w when a step fails
    to decrease the objective.  Iteration stops when the sup-norm of the
    gradient density drops below ``gradient_tolerance`` (converged) or no
    step achieves descent (stalled).
    """
    if fields.n_controls == 0:
        raise DegenerateProblemError("field set exposes no controls")
    if method not in ("gradient", "bvp"):
        raise ConfigurationError(f"unknown method {method!r}")
    if u0 is None:
        u0 = ControlSignal.zeros(config.horizon, config.n_intervals,
                                 fields.n_controls)
    _check_compatible(u0, fields, config)

    u = u0.copy()
    traj = integrate_forward(state, u, fields, config)
    obj = objective_value(traj)
    history = [_history_row(0, obj, goal_value(traj.final_state, config))]
    alpha = step0
    omega = relaxation
    converged = False
    stalled = False
    grad_norm = np.inf
    it = 0

    for it in range(1, max_iterations + 1):
        adj = integrate_adjoint(traj)
        grad = control_gradient(traj, adj)
        grad_norm = float(np.abs(grad).max()) if grad.size else 0.0
        if grad_norm <= gradient_tolerance:
            converged = True
            break

        backtracks = 0
        if method == "gradient":
            gsq = float(np.sum(grad**2))
            accepted = False
            while alpha > 1e-14:
                trial = u.values - alpha * grad
                cand_traj, cand_obj = _forward_objective(state, trial, u,
                                                         fields, config)
                if cand_obj <= obj - 1e-4 * alpha * gsq:
                    accepted = True
                    break
                alpha *= 0.5
                backtracks += 1
            if not accepted:
                stalled = True
                break
            u = ControlSignal(u.times, trial)
            traj, obj = cand_traj, cand_obj
            step = alpha
            alpha = min(alpha * 1.3, 1e6)
        else:
            adj_nodes = adj.xhs[::ADJOINT_SUBSTEPS]
            xs_nodes = traj.xs[::FORWARD_SUBSTEPS]
            rhs = np.empty_like(u.values)
            for i, shape in enumerate(fields.control_basis):
                rhs[:, i] = -np.sum(shape.grad(xs_nodes) * adj_nodes, axis=1)
            target = solve_control_bvp(rhs, config)
            accepted = False
            while omega > 1e-10:
                trial = (1.0 - omega) * u.values + omega * target
                cand_traj, cand_obj = _forward_objective(state, trial, u,
                                                         fields, config)
                if cand_obj < obj:
                    accepted = True
                    break
                omega *= 0.5
                backtracks += 1
            if not accepted:
                stalled = True
                break
            u = ControlSignal(u.times, trial)
            traj, obj = cand_traj, cand_obj
            step = omega
            omega = min(omega * 1.2, relaxation)
        history.append(_history_row(it, obj,
                                    goal_value(traj.final_state, config),
                                    backtracks, grad_norm, step))

    return OptimizeResult(u=u, objective=obj,
                          goal=goal_value(traj.final_state, config),
                          cost=cost_value(u, config), gradient_norm=grad_norm,
                          iterations=it, converged=converged, stalled=stalled,
                          history=history)
