"""Compiled inner loops for the characteristic (classical) solvers.

Field shapes arrive as (code, params) pairs produced by fields.pack_scalar /
fields.pack_vector, so the hot loops never touch Python objects.  The backend
is chosen at import from the SPINOC_BACKEND environment variable: "numba"
(default) JIT-compiles everything below, "numpy" runs the same code as plain
Python.  Both paths execute identical statements; benchmarks/bench_backends.py
measures the gap.

Time stepping layout: the forward pass runs classic RK4 with four substeps
per control interval and stores the state on the quarter grid (4N+1 points).
The adjoint pass runs backward RK4 with two substeps per interval; its stage
times then land exactly on stored quarter-grid states, so no interpolation of
the forward solution is ever needed.
"""

import os
import warnings

import numpy as np

_requested = os.environ.get("SPINOC_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    warnings.warn(f"unknown SPINOC_BACKEND {_requested!r}, using numba")
    _requested = "numba"

if _requested == "numba":
    try:
        from numba import njit
        BACKEND = "numba"
    except ImportError:      # pragma: no cover - exercised only without numba
        warnings.warn("numba unavailable, falling back to the numpy backend")
        BACKEND = "numpy"
else:
    BACKEND = "numpy"

if BACKEND == "numba":
    def _jit(f):
        return njit(cache=True)(f)
else:
    def _jit(f):
        return f


# ---------------------------------------------------------------------------
# field evaluation on packed (code, params) encodings
# ---------------------------------------------------------------------------
# scalar codes: 0 zero, 1 harmonic k/2 |x-c|^2, 2 linear g.x,
#               3 gaussian A exp(-|x-c|^2 / 2w^2)
# vector codes: 0 zero, 1 uniform v, 2 linear v + M x,
#               3 gaussian v exp(-|x-c|^2 / 2w^2)

@_jit
def scalar_value(code, par, x):
    if code == 1:
        r0 = x[0] - par[1]
        r1 = x[1] - par[2]
        r2 = x[2] - par[3]
        return 0.5 * par[0] * (r0 * r0 + r1 * r1 + r2 * r2)
    if code == 2:
        return par[0] * x[0] + par[1] * x[1] + par[2] * x[2]
    if code == 3:
        r0 = x[0] - par[1]
        r1 = x[1] - par[2]
        r2 = x[2] - par[3]
        w2 = par[4] * par[4]
        return par[0] * np.exp(-(r0 * r0 + r1 * r1 + r2 * r2) / (2.0 * w2))
    return 0.0


@_jit
def scalar_grad(code, par, x, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if code == 1:
        out[0] = par[0] * (x[0] - par[1])
        out[1] = par[0] * (x[1] - par[2])
        out[2] = par[0] * (x[2] - par[3])
    elif code == 2:
        out[0] = par[0]
        out[1] = par[1]
        out[2] = par[2]
    elif code == 3:
        v = scalar_value(code, par, x)
        w2 = par[4] * par[4]
        out[0] = -v * (x[0] - par[1]) / w2
        out[1] = -v * (x[1] - par[2]) / w2
        out[2] = -v * (x[2] - par[3]) / w2


@_jit
def scalar_hess(code, par, x, out):
    for a in range(3):
        for b in range(3):
            out[a, b] = 0.0
    if code == 1:
        out[0, 0] = par[0]
        out[1, 1] = par[0]
        out[2, 2] = par[0]
    elif code == 3:
        v = scalar_value(code, par, x)
        w2 = par[4] * par[4]
        r0 = x[0] - par[1]
        r1 = x[1] - par[2]
        r2 = x[2] - par[3]
        r = (r0, r1, r2)
        for a in range(3):
            for b in range(3):
                out[a, b] = v * r[a] * r[b] / (w2 * w2)
            out[a, a] -= v / w2


@_jit
def vector_value(code, par, x, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if code == 0:
        return
    out[0] = par[0]
    out[1] = par[1]
    out[2] = par[2]
    if code == 2:
        for a in range(3):
            out[a] += par[3 + 3 * a] * x[0] + par[4 + 3 * a] * x[1] \
                + par[5 + 3 * a] * x[2]
    elif code == 3:
        r0 = x[0] - par[3]
        r1 = x[1] - par[4]
        r2 = x[2] - par[5]
        w2 = par[6] * par[6]
        env = np.exp(-(r0 * r0 + r1 * r1 + r2 * r2) / (2.0 * w2))
        out[0] *= env
        out[1] *= env
        out[2] *= env


@_jit
def vector_jac(code, par, x, out):
    for a in range(3):
        for b in range(3):
            out[a, b] = 0.0
    if code == 2:
        for a in range(3):
            out[a, 0] = par[3 + 3 * a]
            out[a, 1] = par[4 + 3 * a]
            out[a, 2] = par[5 + 3 * a]
    elif code == 3:
        r0 = x[0] - par[3]
        r1 = x[1] - par[4]
        r2 = x[2] - par[5]
        w2 = par[6] * par[6]
        env = np.exp(-(r0 * r0 + r1 * r1 + r2 * r2) / (2.0 * w2))
        r = (r0, r1, r2)
        for a in range(3):
            va = par[a] * env
            for b in range(3):
                out[a, b] = -va * r[b] / w2


@_jit
def potential(uc, up, ccodes, cpars, u, x):
    val = scalar_value(uc, up, x)
    for i in range(ccodes.shape[0]):
        val += u[i] * scalar_value(ccodes[i], cpars[i], x)
    return val


@_jit
def electric(uc, up, ccodes, cpars, u, x, out):
    scalar_grad(uc, up, x, out)
    tmp = np.empty(3)
    for i in range(ccodes.shape[0]):
        scalar_grad(ccodes[i], cpars[i], x, tmp)
        for a in range(3):
            out[a] += u[i] * tmp[a]
    out[0] = -out[0]
    out[1] = -out[1]
    out[2] = -out[2]


@_jit
def electric_jac(uc, up, ccodes, cpars, u, x, out):
    scalar_hess(uc, up, x, out)
    tmp = np.empty((3, 3))
    for i in range(ccodes.shape[0]):
        scalar_hess(ccodes[i], cpars[i], x, tmp)
        for a in range(3):
            for b in range(3):
                out[a, b] += u[i] * tmp[a, b]
    for a in range(3):
        for b in range(3):
            out[a, b] = -out[a, b]


@_jit
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@_jit
def _u_at(u_nodes, dt, t, out):
    """Piecewise-linear control value at time t (clamped to the grid)."""
    n_last = u_nodes.shape[0] - 1
    s = t / dt
    k = int(np.floor(s))
    if k < 0:
        k = 0
    if k > n_last - 1:
        k = n_last - 1
    w = s - k
    if w < 0.0:
        w = 0.0
    if w > 1.0:
        w = 1.0
    for i in range(u_nodes.shape[1]):
        out[i] = (1.0 - w) * u_nodes[k, i] + w * u_nodes[k + 1, i]


@_jit
def _forward_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                 u, x, p, d, dx, dp, dd):
    for a in range(3):
        dx[a] = p[a] / mass
    electric(uc, up, ccodes, cpars, u, x, dp)
    bv = np.empty(3)
    kv = np.empty(3)
    w = np.empty(3)
    vector_value(bcode, bpar, x, bv)
    vector_value(kcode, kpar, x, kv)
    _cross(p, kv, w)
    for a in range(3):
        w[a] = 2.0 * (w[a] - bv[a])
    _cross(w, d, dd)


@_jit
def rk4_forward(x0, p0, d0, u_nodes, dt, mass,
                uc, up, ccodes, cpars, bcode, bpar, kcode, kpar):
    """Forward characteristics on the quarter grid.

    Returns (xs, ps, ds) with shape (4 n_steps + 1, 3) where n_steps is the
    number of control intervals; row 4k is the state at node time k dt.
    """
    n_steps = u_nodes.shape[0] - 1
    n_sub = 4
    h = dt / n_sub
    n_rows = n_sub * n_steps + 1
    xs = np.empty((n_rows, 3))
    ps = np.empty((n_rows, 3))
    ds = np.empty((n_rows, 3))
    x = x0.copy()
    p = p0.copy()
    d = d0.copy()
    xs[0] = x
    ps[0] = p
    ds[0] = d
    uval = np.empty(u_nodes.shape[1])
    k1x = np.empty(3); k1p = np.empty(3); k1d = np.empty(3)
    k2x = np.empty(3); k2p = np.empty(3); k2d = np.empty(3)
    k3x = np.empty(3); k3p = np.empty(3); k3d = np.empty(3)
    k4x = np.empty(3); k4p = np.empty(3); k4d = np.empty(3)
    tx = np.empty(3); tp = np.empty(3); td = np.empty(3)
    for row in range(1, n_rows):
        t = (row - 1) * h
        _u_at(u_nodes, dt, t, uval)
        _forward_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, x, p, d, k1x, k1p, k1d)
        _u_at(u_nodes, dt, t + 0.5 * h, uval)
        for a in range(3):
            tx[a] = x[a] + 0.5 * h * k1x[a]
            tp[a] = p[a] + 0.5 * h * k1p[a]
            td[a] = d[a] + 0.5 * h * k1d[a]
        _forward_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, tx, tp, td, k2x, k2p, k2d)
        for a in range(3):
            tx[a] = x[a] + 0.5 * h * k2x[a]
            tp[a] = p[a] + 0.5 * h * k2p[a]
            td[a] = d[a] + 0.5 * h * k2d[a]
        _forward_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, tx, tp, td, k3x, k3p, k3d)
        _u_at(u_nodes, dt, t + h, uval)
        for a in range(3):
            tx[a] = x[a] + h * k3x[a]
            tp[a] = p[a] + h * k3p[a]
            td[a] = d[a] + h * k3d[a]
        _forward_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, tx, tp, td, k4x, k4p, k4d)
        for a in range(3):
            x[a] += h / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a])
            p[a] += h / 6.0 * (k1p[a] + 2.0 * k2p[a] + 2.0 * k3p[a] + k4p[a])
            d[a] += h / 6.0 * (k1d[a] + 2.0 * k2d[a] + 2.0 * k3d[a] + k4d[a])
        xs[row] = x
        ps[row] = p
        ds[row] = d
    return xs, ps, ds


@_jit
def _adjoint_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                 u, x, p, xh, ph, eta, dxh, dph, deta):
    """Backward-time adjoint right-hand side (in forward time coordinates).

    xh couples to eta through the Rashba field, ph picks up the tracking
    force through the electric Jacobian and the field gradients, eta rotates
    in the same total precession field as the forward spin.
    """
    kv = np.empty(3)
    bv = np.empty(3)
    w = np.empty(3)
    tmp = np.empty(3)
    vector_value(kcode, kpar, x, kv)
    vector_value(bcode, bpar, x, bv)
    # d xh / dt = -ph / m + 2 K ^ eta
    _cross(kv, eta, tmp)
    for a in range(3):
        dxh[a] = -ph[a] / mass + 2.0 * tmp[a]
    # d ph / dt_i = -(dE_a/dx_i) xh_a + 2 (p ^ dK/dx_i - dB/dx_i) . eta
    ejac = np.empty((3, 3))
    electric_jac(uc, up, ccodes, cpars, u, x, ejac)
    kjac = np.empty((3, 3))
    bjac = np.empty((3, 3))
    vector_jac(kcode, kpar, x, kjac)
    vector_jac(bcode, bpar, x, bjac)
    col = np.empty(3)
    for i in range(3):
        acc = 0.0
        for a in range(3):
            acc -= ejac[a, i] * xh[a]
        for a in range(3):
            col[a] = kjac[a, i]
        _cross(p, col, tmp)
        for a in range(3):
            acc += 2.0 * (tmp[a] - bjac[a, i]) * eta[a]
        dph[i] = acc
    # d eta / dt = 2 (p ^ K - B) ^ eta
    _cross(p, kv, w)
    for a in range(3):
        w[a] = 2.0 * (w[a] - bv[a])
    _cross(w, eta, deta)


@_jit
def rk4_adjoint(xs, ps, u_nodes, dt, mass,
                uc, up, ccodes, cpars, bcode, bpar, kcode, kpar,
                xh_T, ph_T, eta_T):
    """Backward RK4 for the adjoint system on the half grid.

    ``xs`` and ``ps`` are the quarter-grid forward states; a backward step of
    dt/2 evaluates stages at offsets 0, 1, 2 on that grid.  Returns
    (xhs, phs, etas) with shape (2 n_steps + 1, 3), row 2k at node time k dt.
    """
    n_sub = 2
    n_rows_f = xs.shape[0]
    n_steps = (n_rows_f - 1) // 4
    n_rows = n_sub * n_steps + 1
    h = -dt / n_sub                      # backward step
    xhs = np.empty((n_rows, 3))
    phs = np.empty((n_rows, 3))
    etas = np.empty((n_rows, 3))
    xh = xh_T.copy()
    ph = ph_T.copy()
    eta = eta_T.copy()
    xhs[n_rows - 1] = xh
    phs[n_rows - 1] = ph
    etas[n_rows - 1] = eta
    uval = np.empty(u_nodes.shape[1])
    k1x = np.empty(3); k1p = np.empty(3); k1e = np.empty(3)
    k2x = np.empty(3); k2p = np.empty(3); k2e = np.empty(3)
    k3x = np.empty(3); k3p = np.empty(3); k3e = np.empty(3)
    k4x = np.empty(3); k4p = np.empty(3); k4e = np.empty(3)
    tx = np.empty(3); tp = np.empty(3); te = np.empty(3)
    for back in range(n_rows - 1, 0, -1):
        # forward-time anchor of this backward step and its quarter-grid row
        q = 2 * back                     # quarter-grid row at the start state
        t = 0.5 * dt * back
        _u_at(u_nodes, dt, t, uval)
        _adjoint_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, xs[q], ps[q], xh, ph, eta, k1x, k1p, k1e)
        _u_at(u_nodes, dt, t + 0.5 * h, uval)
        for a in range(3):
            tx[a] = xh[a] + 0.5 * h * k1x[a]
            tp[a] = ph[a] + 0.5 * h * k1p[a]
            te[a] = eta[a] + 0.5 * h * k1e[a]
        _adjoint_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, xs[q - 1], ps[q - 1], tx, tp, te, k2x, k2p, k2e)
        for a in range(3):
            tx[a] = xh[a] + 0.5 * h * k2x[a]
            tp[a] = ph[a] + 0.5 * h * k2p[a]
            te[a] = eta[a] + 0.5 * h * k2e[a]
        _adjoint_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, xs[q - 1], ps[q - 1], tx, tp, te, k3x, k3p, k3e)
        _u_at(u_nodes, dt, t + h, uval)
        for a in range(3):
            tx[a] = xh[a] + h * k3x[a]
            tp[a] = ph[a] + h * k3p[a]
            te[a] = eta[a] + h * k3e[a]
        _adjoint_rhs(uc, up, ccodes, cpars, bcode, bpar, kcode, kpar, mass,
                     uval, xs[q - 2], ps[q - 2], tx, tp, te, k4x, k4p, k4e)
        for a in range(3):
            xh[a] += h / 6.0 * (k1x[a] + 2.0 * k2x[a] + 2.0 * k3x[a] + k4x[a])
            ph[a] += h / 6.0 * (k1p[a] + 2.0 * k2p[a] + 2.0 * k3p[a] + k4p[a])
            eta[a] += h / 6.0 * (k1e[a] + 2.0 * k2e[a] + 2.0 * k3e[a] + k4e[a])
        xhs[back - 1] = xh
        phs[back - 1] = ph
        etas[back - 1] = eta
    return xhs, phs, etas
