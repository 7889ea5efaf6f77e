"""Phase-space grid, Wigner states in Pauli components, and the spectral
Theta pseudo-differential operators.

Reduced model: 1D position x 1D momentum, both periodic; spin components and
the K, B fields stay full 3-vectors with the momentum embedded as (p, 0, 0).

Fourier conventions (fixed once, all operators documented against it): the
Theta operators use the kernel ``exp(-i eta (p - p'))``,

    Theta[f](x, p) = (1/2pi) int deta dp' delta(x, eta) f(x, p')
                     * exp(-i eta (p - p')),

whose discrete realization is ``fft_p(delta(x, eta) * ifft_p(f))`` with
``eta = 2 pi fftfreq(n_p, dp)``; the p0 phases cancel identically, so no
shifting is needed.  delta_minus is odd and imaginary in eta and is zeroed at
the unpaired Nyquist mode (preserves realness and exact skew-adjointness);
delta_plus is even and real and keeps its Nyquist entry.  The spectral x and p
derivatives zero the Nyquist multiplier for the same reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.fft

from .errors import ConfigurationError, DegenerateProblemError

MASS_TOLERANCE = 1e-12


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic phase-space box [x0, x0+lx) x [p0, p0+lp) with n_x by n_p
    nodes.  Node counts must be powers of two (transform efficiency)."""

    n_x: int
    n_p: int
    x0: float
    lx: float
    p0: float
    lp: float

    def __post_init__(self):
        if not _is_power_of_two(self.n_x):
            raise ConfigurationError(f"n_x = {self.n_x} is not a power of two")
        if not _is_power_of_two(self.n_p):
            raise ConfigurationError(f"n_p = {self.n_p} is not a power of two")
        if self.lx <= 0 or self.lp <= 0:
            raise ConfigurationError("box lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.n_x

    @property
    def dp(self) -> float:
        return self.lp / self.n_p

    @cached_property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_x)

    @cached_property
    def p(self) -> np.ndarray:
        return self.p0 + self.dp * np.arange(self.n_p)

    @cached_property
    def eta(self) -> np.ndarray:
        """Dual variable to p (conjugate frequency grid)."""
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n_p, d=self.dp)

    @cached_property
    def mu(self) -> np.ndarray:
        """Dual variable to x."""
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n_x, d=self.dx)

    @cached_property
    def ika_x(self) -> np.ndarray:
        """Spectral d/dx multiplier i*mu with the Nyquist mode zeroed."""
        m = 1j * self.mu
        m[self.n_x // 2] = 0.0
        return m

    @cached_property
    def ika_p(self) -> np.ndarray:
        """Spectral d/dp multiplier i*eta with the Nyquist mode zeroed."""
        m = 1j * self.eta
        m[self.n_p // 2] = 0.0
        return m

    @cached_property
    def xx(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], (self.n_x, self.n_p))

    @cached_property
    def pp(self) -> np.ndarray:
        return np.broadcast_to(self.p[None, :], (self.n_x, self.n_p))

    @property
    def cell(self) -> float:
        return self.dx * self.dp


@dataclass
class WignerState:
    """Four real Pauli components on a PhaseGrid, tagged with hbar.

    ``data`` has shape (4, n_x, n_p): channel 0 is f0 (identity component),
    channels 1..3 are the spin components.  For a hermitian Wigner matrix all
    four are real.
    """

    grid: PhaseGrid
    data: np.ndarray
    hbar: float
    time: float = 0.0

    def __post_init__(self):
        expected = (4, self.grid.n_x, self.grid.n_p)
        if self.data.shape != expected:
            raise ConfigurationError(
                f"state data has shape {self.data.shape}, expected {expected}"
            )
        if self.hbar <= 0:
            raise ConfigurationError("hbar must be positive")

    @classmethod
    def from_components(cls, grid, f0, fvec, hbar, time=0.0) -> "WignerState":
        data = np.empty((4, grid.n_x, grid.n_p))
        data[0] = f0
        data[1:] = fvec
        return cls(grid=grid, data=data, hbar=float(hbar), time=float(time))

    @property
    def f0(self) -> np.ndarray:
        return self.data[0]

    @property
    def fvec(self) -> np.ndarray:
        return self.data[1:]

    def copy(self) -> "WignerState":
        return WignerState(self.grid, self.data.copy(), self.hbar, self.time)


# ---------------------------------------------------------------------------
# delta symbols and Theta operators
# ---------------------------------------------------------------------------

def build_delta_minus(symbol: Callable, grid: PhaseGrid, hbar: float) -> np.ndarray:
    """delta_minus V(x, eta) = [V(x + eta hbar/2) - V(x - eta hbar/2)] / (i hbar).

    ``symbol`` maps an array of positions to values (analytic closure; the
    shifted points never lie on the grid).  Output is (n_x, n_p), imaginary
    and odd in eta for real V; the unpaired Nyquist column is zeroed.
    """
    shift = 0.5 * hbar * grid.eta[None, :]
    xs = grid.x[:, None]
    out = (symbol(xs + shift) - symbol(xs - shift)) / (1j * hbar)
    out = np.ascontiguousarray(out, dtype=complex)
    out[:, grid.n_p // 2] = 0.0
    return out


def build_delta_plus(symbol: Callable, grid: PhaseGrid, hbar: float) -> np.ndarray:
    """delta_plus V(x, eta) = V(x + eta hbar/2) + V(x - eta hbar/2)."""
    shift = 0.5 * hbar * grid.eta[None, :]
    xs = grid.x[:, None]
    out = symbol(xs + shift) + symbol(xs - shift)
    return np.ascontiguousarray(out, dtype=complex)


def apply_theta(delta: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Apply a Theta operator given its delta symbol: fft_p(delta * ifft_p f)."""
    return scipy.fft.fft(delta * scipy.fft.ifft(f, axis=-1), axis=-1).real


def theta_minus(symbol: Callable, f: np.ndarray, grid: PhaseGrid, hbar: float) -> np.ndarray:
    """Moyal-commutator operator with position symbol V.

    For linear and quadratic V this is exactly grad V * df/dp (delta_minus is
    linear in eta with no remainder); for smooth V the difference is O(hbar^2).
    """
    return apply_theta(build_delta_minus(symbol, grid, hbar), f)


def theta_plus(symbol: Callable, f: np.ndarray, grid: PhaseGrid, hbar: float) -> np.ndarray:
    """Moyal-anticommutator operator with position symbol V; tends to 2 V f."""
    return apply_theta(build_delta_plus(symbol, grid, hbar), f)


def deriv_x(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Spectral d/dx along axis -2 (works on (..., n_x, n_p) stacks)."""
    spec = scipy.fft.fft(f, axis=-2)
    spec *= grid.ika_x[:, None]
    return scipy.fft.ifft(spec, axis=-2).real


def deriv_p(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Spectral d/dp along axis -1."""
    spec = scipy.fft.fft(f, axis=-1)
    spec *= grid.ika_p
    return scipy.fft.ifft(spec, axis=-1).real


# ---------------------------------------------------------------------------
# inner products, norms, moments
# ---------------------------------------------------------------------------

def _check_same_grid(f: WignerState, h: WignerState):
    if f.grid != h.grid:
        raise ConfigurationError("states live on different grids")


def inner_stack(fdata: np.ndarray, hdata: np.ndarray, grid: PhaseGrid) -> float:
    """<f, h> = (1/2) tr int f^dag h = sum over channels and grid * dx dp."""
    return float(np.sum(fdata * hdata) * grid.cell)


def inner_product(f: WignerState, h: WignerState) -> float:
    """Duality pairing <f, h> = (1/2) tr int f^dag h dx dp.

    In Pauli components tr{f^dag h} = 2 (f0 h0 + fvec . hvec), so the pairing
    is the plain 4-channel dot product integrated over the box.
    """
    _check_same_grid(f, h)
    return inner_stack(f.data, h.data, f.grid)


def l2_norm(f: WignerState) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def h1p_norm(f: WignerState) -> float:
    """Momentum-weighted Sobolev norm: sum over the four components of
    int (1 + p^2) f_c^2 + |df_c/dx|^2 + |df_c/dp|^2, square-rooted."""
    g = f.grid
    w = 1.0 + g.pp**2
    total = np.sum(w * f.data**2)
    total += np.sum(deriv_x(f.data, g) ** 2)
    total += np.sum(deriv_p(f.data, g) ** 2)
    return float(np.sqrt(total * g.cell))


class Moments(NamedTuple):
    mass: float
    mean_x: float
    mean_p: float
    spin: np.ndarray
    var_x: float
    var_p: float


def moments(f: WignerState) -> Moments:
    """Mass, phase-space means, spin vector and centered second moments.

    mass = tr int f = 2 int f0; means and variances are taken against the
    probability weight 2 f0 / mass; spin = 2 int fvec / mass.
    """
    g = f.grid
    cell = g.cell
    mass = 2.0 * float(np.sum(f.f0)) * cell
    if mass <= MASS_TOLERANCE:
        raise DegenerateProblemError(
            f"state mass {mass:.3e} is below tolerance; moments undefined"
        )
    w = 2.0 * f.f0 * cell / mass
    mean_x = float(np.sum(g.xx * w))
    mean_p = float(np.sum(g.pp * w))
    spin = 2.0 * np.sum(f.fvec, axis=(1, 2)) * cell / mass
    var_x = float(np.sum((g.xx - mean_x) ** 2 * w))
    var_p = float(np.sum((g.pp - mean_p) ** 2 * w))
    return Moments(mass, mean_x, mean_p, spin, var_x, var_p)


# ---------------------------------------------------------------------------
# coherent states
# ---------------------------------------------------------------------------

def envelope_margins(grid: PhaseGrid, hbar: float, xbar: float, pbar: float,
                     sigma: float) -> tuple:
    """(required, available) margins in x and p for the 6-sigma box rule."""
    sx = np.sqrt(0.5 * hbar * sigma**2)
    sp = np.sqrt(0.5 * hbar / sigma**2)
    avail_x = min(xbar - grid.x0, grid.x0 + grid.lx - xbar)
    avail_p = min(pbar - grid.p0, grid.p0 + grid.lp - pbar)
    return (6.0 * sx, 6.0 * sp), (avail_x, avail_p)


def coherent_wigner(grid: PhaseGrid, hbar: float, xbar: float, pbar: float,
                    sigma: float, dbar) -> WignerState:
    """Exact Wigner transform of a Gaussian coherent state with spin.

    The envelope is G(x, p) = (1/pi hbar) exp(-(x-xbar)^2/(hbar sigma^2)
    - sigma^2 (p-pbar)^2/hbar), normalized so tr int f = int G = 1, with
    f0 = G/2 and fvec = dbar G/2.  Position variance is hbar sigma^2/2,
    momentum variance hbar/(2 sigma^2) (minimum uncertainty).

    Raises a configuration error if the 6-sigma envelope does not fit the box
    (periodic aliasing) or |dbar| > 1 (not a spinor expectation).
    """
    dbar = np.asarray(dbar, dtype=float)
    if dbar.shape != (3,):
        raise ConfigurationError("dbar must be a 3-vector")
    if np.linalg.norm(dbar) > 1.0 + 1e-12:
        raise ConfigurationError(f"|dbar| = {np.linalg.norm(dbar):.6f} exceeds 1")
    required, available = envelope_margins(grid, hbar, xbar, pbar, sigma)
    if required[0] > available[0] or required[1] > available[1]:
        raise ConfigurationError(
            "coherent envelope exceeds the box: needs margins "
            f"(x: {required[0]:.3f}, p: {required[1]:.3f}), has "
            f"(x: {available[0]:.3f}, p: {available[1]:.3f}); enlarge the domain"
        )
    gx = (grid.x[:, None] - xbar) ** 2 / (hbar * sigma**2)
    gp = sigma**2 * (grid.p[None, :] - pbar) ** 2 / hbar
    env = np.exp(-(gx + gp)) / (np.pi * hbar)
    data = np.empty((4, grid.n_x, grid.n_p))
    data[0] = 0.5 * env
    data[1:] = 0.5 * dbar[:, None, None] * env
    return WignerState(grid=grid, data=data, hbar=float(hbar), time=0.0)
