"""Slow reference implementations used to pin down the spectral kernels.

Everything here trades speed for literalness: quadratures are written as the
sums they come from, with no FFT shortcuts, so a disagreement with the fast
path points at the fast path.  Grid sizes are capped at 16 per axis; these
routines are quartic (or worse) in the node count on purpose.

The checks they back:
  * ``direct_theta`` realizes Theta as the literal (eta, p') double sum with
    the same eta ladder the spectral path uses.
  * ``direct_moyal_star_pk`` evaluates the full Moyal product (p K(x)) # f by
    4D quadrature in the double Fourier representation.  Its commutator and
    anticommutator parts must match the Theta-operator assembly identities
        [p K, f]_# / (i hbar) = p Theta-[f] - (1/2) Theta+[df/dx]
        {p K, f}_#            = p Theta+[f] + (hbar^2/2) Theta-[df/dx]
    exactly (not asymptotically) whenever f has empty Nyquist rows in both
    axes, because both sides are then the same trigonometric polynomial.
  * ``fd_gradient`` is the central-difference fallback for every analytic
    gradient in the package.

``run_validation`` bundles the cheap ones into a pass/fail report for the
CLI; the full suite lives in the test tree.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.fft

from .errors import ConfigurationError
from .wigner import PhaseGrid, build_delta_minus, build_delta_plus

TINY_LIMIT = 16


def _require_tiny(grid: PhaseGrid):
    if grid.n_x > TINY_LIMIT or grid.n_p > TINY_LIMIT:
        raise ConfigurationError(
            f"reference quadratures are capped at {TINY_LIMIT} nodes per axis, "
            f"got {grid.n_x} x {grid.n_p}"
        )


def direct_theta(symbol: Callable, f: np.ndarray, grid: PhaseGrid, hbar: float,
                 parity: str = "minus") -> np.ndarray:
    """Literal double-sum Theta:

        theta[j, k] = (1/n_p) sum_{n, m} delta(x_j, eta_n) f[j, m]
                      * exp(-i eta_n (p_k - p_m))

    with eta the fftfreq ladder and the same Nyquist rule as the fast path
    (delta_minus zeroed at the unpaired mode).  The 1/n_p prefactor is the
    collapsed continuum measure (1/2pi) * (2pi/l_p) * dp.
    """
    _require_tiny(grid)
    if parity == "minus":
        delta = build_delta_minus(symbol, grid, hbar)
    elif parity == "plus":
        delta = build_delta_plus(symbol, grid, hbar)
    else:
        raise ConfigurationError(f"parity must be 'minus' or 'plus', got {parity!r}")
    phase = np.exp(-1j * np.subtract.outer(grid.p, grid.p)[None, :, :]
                   * grid.eta[:, None, None])          # (n, k, m)
    out = np.einsum("jn,jm,nkm->jk", delta, f.astype(complex), phase) / grid.n_p
    return out.real


def direct_moyal_star_pk(kcomp: Callable, f: np.ndarray, grid: PhaseGrid,
                         hbar: float) -> np.ndarray:
    """Full Moyal product S = (p K(x)) # f by quadrature (complex output).

    Expanding f in discrete plane waves, the star product shifts the left
    symbol's arguments: p -> p + hbar mu/2 and x -> x - hbar eta/2, so

        S[j, k] = (1/(n_x n_p)) sum_{m, n} (p_k + hbar mu_m / 2)
                  * K(x_j - hbar eta_n / 2)
                  * exp(2 pi i j m / n_x) exp(2 pi i k n / n_p) fhat[m, n]

    with fhat = fft2(f).  The commutator and anticommutator of real symbols
    are 2i Im(S) and 2 Re(S).
    """
    _require_tiny(grid)
    fhat = scipy.fft.fft2(np.asarray(f, dtype=complex))
    ex = np.exp(2j * np.pi * np.outer(np.arange(grid.n_x), np.arange(grid.n_x))
                / grid.n_x)                             # (j, m)
    ep = np.exp(2j * np.pi * np.outer(np.arange(grid.n_p), np.arange(grid.n_p))
                / grid.n_p)                             # (k, n)
    kshift = kcomp(grid.x[:, None] - 0.5 * hbar * grid.eta[None, :])  # (j, n)
    c1 = ex @ fhat                                      # (j, n)
    c2 = (ex * (0.5 * hbar * grid.mu)[None, :]) @ fhat  # (j, n)
    t1 = np.einsum("jn,jn,kn->jk", kshift, c1, ep)
    t2 = np.einsum("jn,jn,kn->jk", kshift, c2, ep)
    return (grid.p[None, :] * t1 + t2) / (grid.n_x * grid.n_p)


def direct_moyal_commutator_pk(kcomp: Callable, f: np.ndarray, grid: PhaseGrid,
                               hbar: float) -> np.ndarray:
    """[p K, f]_# / (i hbar) for real f and real K, as a real array."""
    s = direct_moyal_star_pk(kcomp, f, grid, hbar)
    return 2.0 * s.imag / hbar


def direct_moyal_anticommutator_pk(kcomp: Callable, f: np.ndarray,
                                   grid: PhaseGrid, hbar: float) -> np.ndarray:
    """{p K, f}_# for real f and real K, as a real array."""
    s = direct_moyal_star_pk(kcomp, f, grid, hbar)
    return 2.0 * s.real


def fd_gradient(func: Callable, u: np.ndarray, eps=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    ``eps`` may be a scalar or an array broadcastable to ``u``; each entry is
    perturbed by its own step.
    """
    u = np.asarray(u, dtype=float)
    steps = np.broadcast_to(np.asarray(eps, dtype=float), u.shape)
    grad = np.empty_like(u)
    flat_u = u.ravel()
    flat_s = steps.ravel()
    flat_g = grad.ravel()
    for i in range(flat_u.size):
        keep = flat_u[i]
        flat_u[i] = keep + flat_s[i]
        jp = func(u)
        flat_u[i] = keep - flat_s[i]
        jm = func(u)
        flat_u[i] = keep
        flat_g[i] = (jp - jm) / (2.0 * flat_s[i])
    return grad


def nyquist_free_noise(grid: PhaseGrid, seed: int, n_fields: int = 1) -> np.ndarray:
    """Random real fields with empty Nyquist rows in both axes.

    Used wherever an identity holds only on the paired modes (the unpaired
    Nyquist frequency has no conjugate partner on an even grid).
    """
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((n_fields, grid.n_x, grid.n_p))
    spec = scipy.fft.fft2(f, axes=(-2, -1))
    spec[:, grid.n_x // 2, :] = 0.0
    spec[:, :, grid.n_p // 2] = 0.0
    out = scipy.fft.ifft2(spec, axes=(-2, -1)).real
    return out[0] if n_fields == 1 else out


def run_validation(seed: int = 11) -> dict:
    """Cheap oracle cross-checks; returns {name: {passed, error, tolerance}}.

    Everything here finishes in seconds; it is the backing for the CLI
    ``validate`` subcommand and is independent of the test suite.  ``seed``
    varies the random test functions; every seed must pass.
    """
    from .wigner import apply_theta, deriv_x, deriv_p, theta_minus, theta_plus, inner_stack

    report = {}

    def record(name, err, tol):
        report[name] = {"passed": bool(err <= tol), "error": float(err),
                        "tolerance": float(tol)}

    grid = PhaseGrid(n_x=8, n_p=8, x0=-3.0, lx=6.0, p0=-3.0, lp=6.0)
    hbar = 0.37
    sym = lambda x: np.exp(-0.5 * (x - 0.2) ** 2) + 0.3 * np.sin(np.pi * x / 3.0)
    f = nyquist_free_noise(grid, seed=seed)
    g = nyquist_free_noise(grid, seed=seed + 1)

    for parity, build in (("minus", build_delta_minus), ("plus", build_delta_plus)):
        fast = apply_theta(build(sym, grid, hbar), f)
        slow = direct_theta(sym, f, grid, hbar, parity=parity)
        record(f"theta_{parity}_vs_direct_sum", np.abs(fast - slow).max(), 1e-12)

    sign = {"minus": -1.0, "plus": 1.0}
    for parity, build in (("minus", build_delta_minus), ("plus", build_delta_plus)):
        delta = build(sym, grid, hbar)
        lhs = inner_stack(apply_theta(delta, f), g, grid)
        rhs = sign[parity] * inner_stack(f, apply_theta(delta, g), grid)
        record(f"theta_{parity}_adjointness", abs(lhs - rhs), 1e-12)

    kc = lambda x: 0.4 + 0.25 * np.cos(np.pi * x / 3.0)
    dxf = deriv_x(f, grid)
    comm_fast = (grid.pp * theta_minus(kc, f, grid, hbar)
                 - 0.5 * theta_plus(kc, dxf, grid, hbar))
    comm_slow = direct_moyal_commutator_pk(kc, f, grid, hbar)
    record("moyal_commutator_vs_theta", np.abs(comm_fast - comm_slow).max(), 1e-11)

    anti_fast = (grid.pp * theta_plus(kc, f, grid, hbar)
                 + 0.5 * hbar**2 * theta_minus(kc, dxf, grid, hbar))
    anti_slow = direct_moyal_anticommutator_pk(kc, f, grid, hbar)
    record("moyal_anticommutator_vs_theta", np.abs(anti_fast - anti_slow).max(), 1e-11)

    slope = 0.83
    lin = lambda x: slope * x - 0.1
    record("theta_minus_linear_exact",
           np.abs(theta_minus(lin, f, grid, hbar) - slope * deriv_p(f, grid)).max(),
           1e-12)

    return report
