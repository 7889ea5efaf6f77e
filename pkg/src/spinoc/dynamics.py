"""Time evolution of the four-component Wigner state.

Three right-hand-side modes, all sharing the transport term -(p/m) df/dx and
the potential operator Theta-_U:

``full``
    The complete pseudo-differential system.  Spin-orbit enters through the
    operators

        A+[h]_k = hbar sum_ij eps_ijk (p_i Theta-_{K_j}[h]
                  - (1/2) Theta+_{K_j}[dh/dx_i])
        A-[h]_k = sum_ij eps_ijk (p_i Theta+_{K_j}[h]
                  + (hbar^2/2) Theta-_{K_j}[dh/dx_i])

    contracted as: the scalar equation gets sum_i A+[f_i]_i and the Zeeman
    term -hbar sum_i Theta-_{B_i}[f_i]; the k-th spin equation gets
    A+[f_0]_k + sum_ij eps_ijk A-[f_j]_i - hbar Theta-_{B_k}[f_0]
    - sum_ij eps_ijk Theta+_{B_i}[f_j].

``uniform``
    Valid when K and B are position independent; the operators collapse to
    exact pointwise algebra: the scalar equation gets hbar K . (curl_x f),
    the spin block 2 (p ^ K - B) ^ f + hbar (K ^ grad_x) f_0.  With constant
    symbols the delta expansions in ``full`` terminate, so both modes agree
    to rounding; this mode just skips the transforms.

``semiclassical``
    First order in hbar: classical transport plus the pointwise precession
    2 (p ^ K - B) ^ f and the O(hbar) gradient corrections; the O(hbar^2)
    remainder of ``full`` is dropped.

The reduced geometry is 1D x 1D: position and momentum live on the first
Cartesian axis, spin and the K, B fields keep all three components.

The evolution operator is exactly skew-adjoint in the L2 pairing up to the
A+/A- aliasing of non-resolved states, so the L2 norm and the mass are
conserved by the spatial discretization; RK4 adds the usual O(dt^5) decay
per step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft

from .classical import ControlSignal
from .errors import ConfigurationError, IntegrationError
from .fields import FieldSet, embed_line
from .wigner import (PhaseGrid, WignerState, build_delta_minus,
                     build_delta_plus, deriv_x, h1p_norm, l2_norm, moments,
                     theta_minus, theta_plus)

MODES = ("full", "uniform", "semiclassical")
CFL_SAFETY = 0.5

DIAGNOSTIC_COLUMNS = ("time", "mass", "l2", "h1p", "mean_x", "mean_p",
                      "d1", "d2", "d3", "var_x", "var_p")


@dataclass(frozen=True)
class EvolutionSpec:
    """Physics of one evolution run: fields, particle mass, RHS mode."""

    fields: FieldSet
    mass: float = 1.0
    mode: str = "full"

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigurationError("mass must be positive")
        if self.mode not in MODES:
            raise ConfigurationError(
                f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "uniform" and not self.fields.uniform_rashba_zeeman():
            raise ConfigurationError(
                "uniform mode requires position-independent K and B")


def _line_scalar(shape):
    return lambda xs: shape.value(embed_line(xs))


def _line_vector_comp(shape, j):
    return lambda xs: shape.value(embed_line(xs))[..., j]


class EvolutionOperator:
    """Precomputed right-hand side for one (grid, hbar, spec) combination.

    Caches the delta symbols of all static fields; only the control part of
    delta-_U is reassembled per evaluation (it is affine in u).
    """

    def __init__(self, grid: PhaseGrid, spec: EvolutionSpec, hbar: float):
        self.grid = grid
        self.spec = spec
        self.hbar = float(hbar)
        if self.hbar <= 0:
            raise ConfigurationError("hbar must be positive")
        f = spec.fields
        xline = embed_line(grid.x)

        if spec.mode in ("full", "uniform"):
            self._dU0 = build_delta_minus(_line_scalar(f.u0), grid, hbar)
            self._dphi = [build_delta_minus(_line_scalar(phi), grid, hbar)
                          for phi in f.control_basis]
        if spec.mode == "full":
            self._s = [build_delta_minus(_line_vector_comp(f.rashba, j), grid,
                                         hbar) for j in range(3)]
            self._q = [build_delta_plus(_line_vector_comp(f.rashba, j), grid,
                                        hbar) for j in range(3)]
            self._sB = [build_delta_minus(_line_vector_comp(f.magnetic, j),
                                          grid, hbar) for j in range(3)]
            self._qB = [build_delta_plus(_line_vector_comp(f.magnetic, j),
                                         grid, hbar) for j in range(3)]
        if spec.mode == "uniform":
            kvec = f.eval_rashba(np.zeros(3))
            bvec = f.eval_magnetic(np.zeros(3))
            # w = 2 (p ^ K - B) on the grid; p along the first axis
            p = grid.pp
            self._w1 = -2.0 * bvec[0] * np.ones_like(p)
            self._w2 = -2.0 * (p * kvec[2] + bvec[1])
            self._w3 = 2.0 * (p * kvec[1] - bvec[2])
            self._kvec = kvec
        if spec.mode == "semiclassical":
            self._kline = f.rashba.value(xline)              # (n_x, 3)
            self._bline = f.magnetic.value(xline)
            self._kx = f.rashba.jac(xline)[:, :, 0]          # d K_j / dx
            self._bx = f.magnetic.jac(xline)[:, :, 0]
            self._u0x = f.u0.grad(xline)[:, 0]
            self._phix = [phi.grad(xline)[:, 0] for phi in f.control_basis]
            p = grid.pp
            bl, kl = self._bline, self._kline
            self._w1 = np.broadcast_to(-2.0 * bl[:, 0][:, None], p.shape)
            self._w2 = -2.0 * (p * kl[:, 2][:, None] + bl[:, 1][:, None])
            self._w3 = 2.0 * (p * kl[:, 1][:, None] - bl[:, 2][:, None])

    def _delta_u(self, u) -> np.ndarray:
        out = self._dU0
        for ui, dphi in zip(u, self._dphi):
            if ui != 0.0:
                out = out + ui * dphi
        return out

    def _u_grad_line(self, u) -> np.ndarray:
        out = self._u0x
        for ui, phix in zip(u, self._phix):
            if ui != 0.0:
                out = out + ui * phix
        return out

    def rhs(self, data: np.ndarray, u) -> np.ndarray:
        u = self.spec.fields._check_u(u if u is not None else
                                      np.zeros(self.spec.fields.n_controls))
        if self.spec.mode == "full":
            return self._rhs_full(data, u)
        if self.spec.mode == "uniform":
            return self._rhs_uniform(data, u)
        return self._rhs_semiclassical(data, u)

    # -- full quantum mode --------------------------------------------------

    def _rhs_full(self, data, u):
        g = self.grid
        hb = self.hbar
        p = g.pp
        dxf = deriv_x(data, g)
        G = scipy.fft.ifft(data, axis=-1)
        GD = scipy.fft.ifft(dxf, axis=-1)
        sU = self._delta_u(u)
        s2, s3 = self._s[1], self._s[2]
        q2, q3 = self._q[1], self._q[2]
        sB, qB = self._sB, self._qB

        # integrands of the plain Theta sums (one fft each) and of the sums
        # carrying an outer factor p (one fft each); grouped to batch all
        # eight final transforms into a single call
        batch = np.empty((8,) + data.shape[1:], dtype=complex)
        batch[0] = sU * G[0] + 0.5 * hb * (q3 * GD[2] - q2 * GD[3]) \
            - hb * (sB[0] * G[1] + sB[1] * G[2] + sB[2] * G[3])
        batch[1] = sU * G[1] - 0.5 * hb**2 * (s3 * GD[3] + s2 * GD[2]) \
            - hb * sB[0] * G[0] - qB[1] * G[3] + qB[2] * G[2]
        batch[2] = sU * G[2] + 0.5 * hb * q3 * GD[0] \
            + 0.5 * hb**2 * s2 * GD[1] \
            - hb * sB[1] * G[0] - qB[2] * G[1] + qB[0] * G[3]
        batch[3] = sU * G[3] - 0.5 * hb * q2 * GD[0] \
            + 0.5 * hb**2 * s3 * GD[1] \
            - hb * sB[2] * G[0] - qB[0] * G[2] + qB[1] * G[1]
        batch[4] = hb * (-s3 * G[2] + s2 * G[3])
        batch[5] = -(q3 * G[3] + q2 * G[2])
        batch[6] = -hb * s3 * G[0] + q2 * G[1]
        batch[7] = hb * s2 * G[0] + q3 * G[1]
        tr = scipy.fft.fft(batch, axis=-1).real

        out = np.empty_like(data)
        pm = p / self.spec.mass
        for c in range(4):
            out[c] = -pm * dxf[c] + tr[c] + p * tr[4 + c]
        return out

    # -- uniform-fields mode ------------------------------------------------

    def _rhs_uniform(self, data, u):
        g = self.grid
        hb = self.hbar
        dxf = deriv_x(data, g)
        sU = self._delta_u(u)
        theta_u = scipy.fft.fft(sU * scipy.fft.ifft(data, axis=-1),
                                axis=-1).real
        k2, k3 = self._kvec[1], self._kvec[2]
        out = np.empty_like(data)
        pm = g.pp / self.spec.mass
        out[0] = -pm * dxf[0] + theta_u[0] + hb * (k3 * dxf[2] - k2 * dxf[3])
        w1, w2, w3 = self._w1, self._w2, self._w3
        out[1] = -pm * dxf[1] + theta_u[1] + w2 * data[3] - w3 * data[2]
        out[2] = -pm * dxf[2] + theta_u[2] + w3 * data[1] - w1 * data[3] \
            + hb * k3 * dxf[0]
        out[3] = -pm * dxf[3] + theta_u[3] + w1 * data[2] - w2 * data[1] \
            - hb * k2 * dxf[0]
        return out

    # -- first order in hbar ------------------------------------------------

    def _rhs_semiclassical(self, data, u):
        g = self.grid
        hb = self.hbar
        dxf = deriv_x(data, g)
        dpf = _deriv_p_batch(data, g)
        ux = self._u_grad_line(u)[:, None]
        p = g.pp
        k2x = self._kx[:, 1][:, None]
        k3x = self._kx[:, 2][:, None]
        b1x = self._bx[:, 0][:, None]
        b2x = self._bx[:, 1][:, None]
        b3x = self._bx[:, 2][:, None]
        k2 = self._kline[:, 1][:, None]
        k3 = self._kline[:, 2][:, None]
        w1, w2, w3 = self._w1, self._w2, self._w3

        out = np.empty_like(data)
        pm = p / self.spec.mass
        out[0] = -pm * dxf[0] + ux * dpf[0] + hb * (
            p * (k2x * dpf[3] - k3x * dpf[2])
            + (k3 * dxf[2] - k2 * dxf[3])
            - (b1x * dpf[1] + b2x * dpf[2] + b3x * dpf[3]))
        out[1] = -pm * dxf[1] + ux * dpf[1] + w2 * data[3] - w3 * data[2] \
            - hb * b1x * dpf[0]
        out[2] = -pm * dxf[2] + ux * dpf[2] + w3 * data[1] - w1 * data[3] \
            + hb * (-p * k3x * dpf[0] + k3 * dxf[0] - b2x * dpf[0])
        out[3] = -pm * dxf[3] + ux * dpf[3] + w1 * data[2] - w2 * data[1] \
            + hb * (p * k2x * dpf[0] - k2 * dxf[0] - b3x * dpf[0])
        return out


def _deriv_p_batch(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    spec = scipy.fft.fft(f, axis=-1)
    spec *= grid.ika_p
    return scipy.fft.ifft(spec, axis=-1).real


# ---------------------------------------------------------------------------
# reference (slow) operator assembly, used by tests against the fused path
# ---------------------------------------------------------------------------

def a_plus(h: np.ndarray, k: int, grid: PhaseGrid, fields: FieldSet,
           hbar: float) -> np.ndarray:
    """k-th component of A+[h] assembled operator by operator."""
    if k == 1:
        return np.zeros_like(h)
    j = 2 if k == 2 else 1          # K_3 pairs with k=2, K_2 with k=3
    sign = -1.0 if k == 2 else 1.0
    sym = _line_vector_comp(fields.rashba, j)
    dh = deriv_x(h, grid)
    return sign * hbar * (grid.pp * theta_minus(sym, h, grid, hbar)
                          - 0.5 * theta_plus(sym, dh, grid, hbar))


def a_minus(h: np.ndarray, k: int, grid: PhaseGrid, fields: FieldSet,
            hbar: float) -> np.ndarray:
    """k-th component of A-[h] assembled operator by operator."""
    if k == 1:
        return np.zeros_like(h)
    j = 2 if k == 2 else 1
    sign = -1.0 if k == 2 else 1.0
    sym = _line_vector_comp(fields.rashba, j)
    dh = deriv_x(h, grid)
    return sign * (grid.pp * theta_plus(sym, h, grid, hbar)
                   + 0.5 * hbar**2 * theta_minus(sym, dh, grid, hbar))


def reference_rhs(state: WignerState, spec: EvolutionSpec, u=None) -> np.ndarray:
    """Straightforward term-by-term assembly of the full-mode RHS."""
    g = state.grid
    hb = state.hbar
    f = spec.fields
    u = f._check_u(u if u is not None else np.zeros(f.n_controls))
    data = state.data

    def theta_u(comp):
        def sym(xs):
            return f.eval_potential(embed_line(xs), u)
        return theta_minus(sym, comp, g, hb)

    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    out = np.empty_like(data)
    pm = g.pp / spec.mass
    zeeman0 = sum(theta_minus(_line_vector_comp(f.magnetic, i), data[1 + i],
                              g, hb) for i in range(3))
    out[0] = -pm * deriv_x(data[0], g) + theta_u(data[0]) \
        + sum(a_plus(data[1 + i], i + 1, g, f, hb) for i in range(3)) \
        - hb * zeeman0
    for k in range(3):
        acc = -pm * deriv_x(data[1 + k], g) + theta_u(data[1 + k]) \
            + a_plus(data[0], k + 1, g, f, hb) \
            - hb * theta_minus(_line_vector_comp(f.magnetic, k), data[0], g, hb)
        for i in range(3):
            for j in range(3):
                e = eps[i, j, k]
                if e != 0.0:
                    acc += e * a_minus(data[1 + j], i + 1, g, f, hb)
                    acc -= e * theta_plus(_line_vector_comp(f.magnetic, i),
                                          data[1 + j], g, hb)
        out[1 + k] = acc
    return out


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def cfl_timestep(grid: PhaseGrid, fields: FieldSet, mass: float,
                 u_bound=None) -> float:
    """Stable step: 0.5 min(dx m / p_max, dp / E_max, 1 / (2 |B_tot|_max)).

    ``u_bound`` bounds |u_i| during the run (defaults to zero); the electric
    bound is the worst case over the box and that control ball.
    """
    xline = embed_line(grid.x)
    p_max = max(abs(grid.p0), abs(grid.p0 + grid.lp))
    e0 = np.linalg.norm(fields.eval_electric(xline,
                                             np.zeros(fields.n_controls)),
                        axis=-1)
    e_max = e0.copy()
    if u_bound is not None:
        bounds = np.broadcast_to(np.asarray(u_bound, dtype=float),
                                 (fields.n_controls,))
        for i, phi in enumerate(fields.control_basis):
            e_max = e_max + abs(bounds[i]) * np.linalg.norm(phi.grad(xline),
                                                            axis=-1)
    e_max = float(e_max.max()) if e_max.size else 0.0
    kn = np.linalg.norm(fields.rashba.value(xline), axis=-1)
    bn = np.linalg.norm(fields.magnetic.value(xline), axis=-1)
    w_max = float((2.0 * (bn + p_max * kn)).max())
    # a valid grid always has p_max > 0, so the transport limit exists
    limits = [grid.dx * mass / p_max]
    if e_max > 0:
        limits.append(grid.dp / e_max)
    if w_max > 0:
        limits.append(1.0 / (2.0 * w_max))
    return CFL_SAFETY * min(limits)


@dataclass
class EvolutionResult:
    final: WignerState
    diagnostics: np.ndarray
    snapshots: Optional[list] = None


def _diag_row(state: WignerState) -> list:
    m = moments(state)
    return [state.time, m.mass, l2_norm(state), h1p_norm(state), m.mean_x,
            m.mean_p, m.spin[0], m.spin[1], m.spin[2], m.var_x, m.var_p]


def integrate(state: WignerState, spec: EvolutionSpec, t_final: float,
              dt: Optional[float] = None, u: Optional[ControlSignal] = None,
              sample_every: int = 10,
              snapshot_times: Optional[np.ndarray] = None) -> EvolutionResult:
    """Classic RK4 from ``state.time`` to ``t_final`` (either direction).

    ``dt`` is a magnitude; when omitted it comes from ``cfl_timestep`` with
    the control bound taken from ``u``.  The requested span is divided into
    a whole number of steps of at most that size.  ``u`` is sampled by linear
    interpolation at stage times; ``snapshot_times`` requests copies of the
    state at those times, which must land on step boundaries.

    A non-finite state, or amplitude growth by twelve orders of magnitude
    over the start (the evolution conserves L2, so that is always a blown-up
    step), aborts with an integration error carrying the last good state and
    its time.
    """
    grid = state.grid
    if u is not None and u.n_controls != spec.fields.n_controls:
        raise ConfigurationError("control channels do not match the field set")
    span = t_final - state.time
    if span == 0.0:
        result = EvolutionResult(final=state.copy(),
                                 diagnostics=np.array([_diag_row(state)]))
        if snapshot_times is not None:
            result.snapshots = [state.copy()]
        return result
    direction = 1.0 if span > 0 else -1.0
    if dt is None:
        bound = np.abs(u.values).max(axis=0) if (u is not None and
                                                 u.values.size) else None
        dt = cfl_timestep(grid, spec.fields, spec.mass, u_bound=bound)
    n_steps = max(1, int(np.ceil(abs(span) / dt - 1e-12)))
    h = span / n_steps

    snap_idx = {}
    if snapshot_times is not None:
        for ts in np.atleast_1d(snapshot_times):
            k = (ts - state.time) / h
            kr = round(k)
            if abs(k - kr) > 1e-8 * max(1.0, abs(k)) or not (0 <= kr <= n_steps):
                raise ConfigurationError(
                    f"snapshot time {ts} does not land on a step boundary")
            snap_idx[int(kr)] = ts

    op = EvolutionOperator(grid, spec, state.hbar)
    nc = spec.fields.n_controls

    def u_at(t):
        if u is None:
            return np.zeros(nc)
        return np.array([np.interp(t, u.times, u.values[:, i])
                         for i in range(nc)])

    data = state.data.copy()
    t = state.time
    blowup = 1e12 * max(1.0, float(np.abs(data).max()))
    rows = [_diag_row(WignerState(grid, data, state.hbar, t))]
    snapshots = []
    if 0 in snap_idx:
        snapshots.append(WignerState(grid, data.copy(), state.hbar, t))

    for step in range(1, n_steps + 1):
        k1 = op.rhs(data, u_at(t))
        k2 = op.rhs(data + 0.5 * h * k1, u_at(t + 0.5 * h))
        k3 = op.rhs(data + 0.5 * h * k2, u_at(t + 0.5 * h))
        k4 = op.rhs(data + h * k3, u_at(t + h))
        new = data + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(new).all() or np.abs(new).max() > blowup:
            raise IntegrationError(
                f"state blew up during step to t = {t + h:.6g}",
                failing_time=t + h,
                last_state=WignerState(grid, data, state.hbar, t))
        data = new
        t = state.time + step * h
        if step in snap_idx:
            snapshots.append(WignerState(grid, data.copy(), state.hbar, t))
        if step % sample_every == 0 or step == n_steps:
            rows.append(_diag_row(WignerState(grid, data, state.hbar, t)))

    final = WignerState(grid, data, state.hbar, t)
    result = EvolutionResult(final=final, diagnostics=np.array(rows))
    if snapshot_times is not None:
        result.snapshots = snapshots
    return result
