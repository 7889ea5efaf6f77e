"""Analytic field closures: controlled potential, magnetic field, Rashba field.

All fields are closed-form shapes from a small catalog, evaluated analytically
at arbitrary points.  That matters because the Theta operators need the
potential at the shifted arguments ``x +- hbar*eta/2``, which never lie on the
grid; analytic evaluation keeps the delta symbols bit-faithful (no
interpolation error).  All listed derivatives are exact.

The control enters affinely, ``U(x, u) = U0(x) + sum_i u_i phi_i(x)``, so
``dU/du_i = phi_i`` does not depend on ``u``.

Sign conventions fixed module-wide: ``E = -grad_x U``, and the total
precession field is ``B_tot(x, p) = 2 (B(x) - p ^ K(x))`` so that
``d' = -B_tot ^ d`` is the spin equation ``d' = 2 (p ^ K - B) ^ d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

SCALAR_KINDS = ("zero", "harmonic", "linear", "gaussian")
VECTOR_KINDS = ("zero", "uniform", "linear", "gaussian")

# Numeric codes shared with the compiled kernels (see _kernels.py).
SCALAR_CODE = {kind: i for i, kind in enumerate(SCALAR_KINDS)}
VECTOR_CODE = {kind: i for i, kind in enumerate(VECTOR_KINDS)}
SCALAR_PARAM_WIDTH = 8
VECTOR_PARAM_WIDTH = 16


def _vec3(v) -> np.ndarray:
    out = np.asarray(v, dtype=float)
    if out.shape != (3,):
        raise ConfigurationError(f"expected a 3-vector, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class ScalarShape:
    """One scalar catalog entry: ``zero``, ``harmonic`` (k/2 |x-c|^2),
    ``linear`` (g.x) or ``gaussian`` (A exp(-|x-c|^2 / 2w^2)).

    Parameters
    ----------
    kind : str
        Catalog entry name.
    amplitude : float
        Spring constant k (harmonic) or peak value A (gaussian).
    center : 3-vector
        Well/bump center c.
    slope : 3-vector
        Gradient g of the linear tilt.
    width : float
        Gaussian width w (standard deviation of the envelope).
    """

    kind: str
    amplitude: float = 0.0
    center: tuple = (0.0, 0.0, 0.0)
    slope: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ConfigurationError(f"unknown scalar field kind {self.kind!r}")
        if self.kind == "gaussian" and self.width <= 0.0:
            raise ConfigurationError("gaussian width must be positive")
        # coerce sequences to tuples so instances stay hashable
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "slope", tuple(float(v) for v in self.slope))

    def value(self, x) -> np.ndarray:
        """Evaluate at points of shape (..., 3); returns shape (...)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros(x.shape[:-1])
        if self.kind == "harmonic":
            r = x - np.asarray(self.center)
            return 0.5 * self.amplitude * np.sum(r * r, axis=-1)
        if self.kind == "linear":
            return x @ np.asarray(self.slope)
        r = x - np.asarray(self.center)
        q = np.sum(r * r, axis=-1) / (2.0 * self.width**2)
        return self.amplitude * np.exp(-q)

    def grad(self, x) -> np.ndarray:
        """Exact gradient, shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros(x.shape)
        if self.kind == "harmonic":
            return self.amplitude * (x - np.asarray(self.center))
        if self.kind == "linear":
            return np.broadcast_to(np.asarray(self.slope), x.shape).copy()
        r = x - np.asarray(self.center)
        return -self.value(x)[..., None] * r / self.width**2

    def hess(self, x) -> np.ndarray:
        """Exact Hessian, shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        eye = np.eye(3)
        if self.kind == "zero" or self.kind == "linear":
            return np.zeros(x.shape + (3,))
        if self.kind == "harmonic":
            return np.broadcast_to(self.amplitude * eye, x.shape + (3,)).copy()
        r = x - np.asarray(self.center)
        w2 = self.width**2
        v = self.value(x)[..., None, None]
        outer = r[..., :, None] * r[..., None, :]
        return v * (outer / w2**2 - eye / w2)


@dataclass(frozen=True)
class VectorShape:
    """One vector catalog entry: ``zero``, ``uniform`` (v), ``linear``
    (v + M x) or ``gaussian`` (v exp(-|x-c|^2 / 2w^2))."""

    kind: str
    value_vec: tuple = (0.0, 0.0, 0.0)
    matrix: tuple = ((0.0,) * 3,) * 3
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in VECTOR_KINDS:
            raise ConfigurationError(f"unknown vector field kind {self.kind!r}")
        if self.kind == "gaussian" and self.width <= 0.0:
            raise ConfigurationError("gaussian width must be positive")
        object.__setattr__(self, "value_vec",
                           tuple(float(v) for v in self.value_vec))
        object.__setattr__(self, "matrix",
                           tuple(tuple(float(v) for v in row)
                                 for row in self.matrix))
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def value(self, x) -> np.ndarray:
        """Evaluate at points of shape (..., 3); returns shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.value_vec, dtype=float)
        if self.kind == "zero":
            return np.zeros(x.shape)
        if self.kind == "uniform":
            return np.broadcast_to(v, x.shape).copy()
        if self.kind == "linear":
            return v + x @ np.asarray(self.matrix, dtype=float).T
        r = x - np.asarray(self.center)
        q = np.sum(r * r, axis=-1) / (2.0 * self.width**2)
        return np.exp(-q)[..., None] * v

    def jac(self, x) -> np.ndarray:
        """Exact Jacobian J[..., a, b] = d V_a / d x_b, shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("zero", "uniform"):
            return np.zeros(x.shape + (3,))
        if self.kind == "linear":
            m = np.asarray(self.matrix, dtype=float)
            return np.broadcast_to(m, x.shape + (3,)).copy()
        r = x - np.asarray(self.center)
        val = self.value(x)
        return -val[..., :, None] * r[..., None, :] / self.width**2


def pack_scalar(shape: ScalarShape):
    """Numeric encoding (code, params) consumed by the compiled kernels."""
    params = np.zeros(SCALAR_PARAM_WIDTH)
    if shape.kind == "harmonic":
        params[0] = shape.amplitude
        params[1:4] = shape.center
    elif shape.kind == "linear":
        params[0:3] = shape.slope
    elif shape.kind == "gaussian":
        params[0] = shape.amplitude
        params[1:4] = shape.center
        params[4] = shape.width
    return SCALAR_CODE[shape.kind], params


def pack_vector(shape: VectorShape):
    """Numeric encoding (code, params) consumed by the compiled kernels."""
    params = np.zeros(VECTOR_PARAM_WIDTH)
    if shape.kind == "uniform":
        params[0:3] = shape.value_vec
    elif shape.kind == "linear":
        params[0:3] = shape.value_vec
        params[3:12] = np.asarray(shape.matrix, dtype=float).ravel()
    elif shape.kind == "gaussian":
        params[0:3] = shape.value_vec
        params[3:6] = shape.center
        params[6] = shape.width
    return VECTOR_CODE[shape.kind], params


@dataclass(frozen=True)
class FieldSet:
    """All externally prescribed fields of one problem.

    Immutable after construction; safe for concurrent read.  The catalog
    entries are selected by name and numeric parameters in the run
    configuration (see the config module).

    Attributes
    ----------
    u0 : ScalarShape
        Uncontrolled part of the potential.
    control_basis : tuple of ScalarShape
        Basis shapes phi_i; the control dimension is their count.
    magnetic : VectorShape
        External magnetic field B(x).
    rashba : VectorShape
        Rashba field K(x); time independent.
    """

    u0: ScalarShape
    control_basis: tuple = ()
    magnetic: VectorShape = field(default_factory=lambda: VectorShape("zero"))
    rashba: VectorShape = field(default_factory=lambda: VectorShape("zero"))

    def __post_init__(self):
        object.__setattr__(self, "control_basis", tuple(self.control_basis))

    @property
    def n_controls(self) -> int:
        return len(self.control_basis)

    def _check_u(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.n_controls,):
            raise ConfigurationError(
                f"control vector has length {u.shape}, "
                f"field set declares {self.n_controls} controls"
            )
        return u

    def eval_potential(self, x, u, t: float = 0.0) -> np.ndarray:
        """U(x, u) = U0(x) + sum_i u_i phi_i(x); x of shape (..., 3)."""
        u = self._check_u(u)
        out = self.u0.value(x)
        for ui, phi in zip(u, self.control_basis):
            if ui != 0.0:
                out = out + ui * phi.value(x)
        return out

    def grad_potential(self, x, u, t: float = 0.0) -> np.ndarray:
        u = self._check_u(u)
        out = self.u0.grad(x)
        for ui, phi in zip(u, self.control_basis):
            if ui != 0.0:
                out = out + ui * phi.grad(x)
        return out

    def hess_potential(self, x, u, t: float = 0.0) -> np.ndarray:
        u = self._check_u(u)
        out = self.u0.hess(x)
        for ui, phi in zip(u, self.control_basis):
            if ui != 0.0:
                out = out + ui * phi.hess(x)
        return out

    def eval_electric(self, x, u, t: float = 0.0) -> np.ndarray:
        """E = -grad_x U, exactly (analytic)."""
        return -self.grad_potential(x, u, t)

    def electric_jac(self, x, u, t: float = 0.0) -> np.ndarray:
        """dE_a/dx_b = -d^2 U / dx_a dx_b."""
        return -self.hess_potential(x, u, t)

    def control_potential(self, i: int, x) -> np.ndarray:
        """dU/du_i = phi_i(x) (u-independent by the affine parametrization)."""
        return self.control_basis[i].value(x)

    def control_electric(self, i: int, x) -> np.ndarray:
        """dE/du_i = -grad phi_i(x)."""
        return -self.control_basis[i].grad(x)

    def eval_magnetic(self, x, t: float = 0.0) -> np.ndarray:
        return self.magnetic.value(x)

    def magnetic_jac(self, x, t: float = 0.0) -> np.ndarray:
        return self.magnetic.jac(x)

    def eval_rashba(self, x) -> np.ndarray:
        return self.rashba.value(x)

    def rashba_jac(self, x) -> np.ndarray:
        return self.rashba.jac(x)

    def eval_total_precession_field(self, x, p) -> np.ndarray:
        """B_tot(x, p) = 2 (B(x) - p ^ K(x)).

        The spin equation of the classical flow is d' = -B_tot ^ d, i.e.
        d' = 2 (p ^ K - B) ^ d.  (The opposite wedge order that appears once
        in the source material is a presumed typo; this convention is the one
        consistent with the forward and adjoint equations being identical.)
        """
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return 2.0 * (self.magnetic.value(x) - np.cross(p, self.rashba.value(x)))

    def uniform_rashba_zeeman(self) -> bool:
        """True when both K and B are constant in space (fast-path modes)."""
        return self.magnetic.kind in ("zero", "uniform") and self.rashba.kind in (
            "zero",
            "uniform",
        )


def embed_line(xs) -> np.ndarray:
    """Embed scalar positions as 3-vectors (x, 0, 0) for the reduced model."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros(xs.shape + (3,))
    out[..., 0] = xs
    return out


def scalar_shape_from_config(cfg: dict) -> ScalarShape:
    """Build a ScalarShape from a config mapping, e.g.
    ``{"kind": "harmonic", "amplitude": 1.0, "center": [0, 0, 0]}``."""
    kind = cfg.get("kind")
    if kind not in SCALAR_KINDS:
        raise ConfigurationError(f"unknown scalar field kind {kind!r}")
    kwargs = {}
    for key in ("amplitude", "width"):
        if key in cfg:
            kwargs[key] = float(cfg[key])
    for key in ("center", "slope"):
        if key in cfg:
            kwargs[key] = tuple(_vec3(cfg[key]))
    return ScalarShape(kind, **kwargs)


def vector_shape_from_config(cfg: dict) -> VectorShape:
    """Build a VectorShape from a config mapping."""
    kind = cfg.get("kind")
    if kind not in VECTOR_KINDS:
        raise ConfigurationError(f"unknown vector field kind {kind!r}")
    kwargs = {}
    if "value" in cfg:
        kwargs["value_vec"] = tuple(_vec3(cfg["value"]))
    if "matrix" in cfg:
        m = np.asarray(cfg["matrix"], dtype=float)
        if m.shape != (3, 3):
            raise ConfigurationError("vector field matrix must be 3x3")
        kwargs["matrix"] = tuple(tuple(row) for row in m)
    if "center" in cfg:
        kwargs["center"] = tuple(_vec3(cfg["center"]))
    if "width" in cfg:
        kwargs["width"] = float(cfg["width"])
    return VectorShape(kind, **kwargs)


def fieldset_from_config(cfg: dict) -> FieldSet:
    """Assemble a FieldSet from the ``fields`` block of a run configuration."""
    u0 = scalar_shape_from_config(cfg.get("potential", {"kind": "zero"}))
    basis = tuple(
        scalar_shape_from_config(entry) for entry in cfg.get("control_basis", [])
    )
    magnetic = vector_shape_from_config(cfg.get("magnetic", {"kind": "zero"}))
    rashba = vector_shape_from_config(cfg.get("rashba", {"kind": "zero"}))
    return FieldSet(u0=u0, control_basis=basis, magnetic=magnetic, rashba=rashba)
