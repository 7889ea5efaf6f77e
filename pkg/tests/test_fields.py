import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinoc.errors import ConfigurationError
from spinoc.fields import (FieldSet, ScalarShape, VectorShape, embed_line,
                           fieldset_from_config, scalar_shape_from_config,
                           vector_shape_from_config)


def fd_grad(fun, x, eps=1e-6):
    g = np.zeros(3)
    for a in range(3):
        step = np.zeros(3)
        step[a] = eps
        g[a] = (fun(x + step) - fun(x - step)) / (2 * eps)
    return g


def test_harmonic_value():
    sh = ScalarShape(kind="harmonic", amplitude=1.0)
    assert sh.value(np.array([3.0, 4.0, 0.0])) == pytest.approx(12.5)


def test_linear_value_and_grad():
    sh = ScalarShape(kind="linear", slope=(2.0, -1.0, 0.5))
    x = np.array([1.0, 1.0, 2.0])
    assert sh.value(x) == pytest.approx(2.0)
    np.testing.assert_allclose(sh.grad(x), [2.0, -1.0, 0.5])


@pytest.mark.parametrize("sh", [
    ScalarShape(kind="harmonic", amplitude=0.8, center=(0.3, -0.2, 0.0)),
    ScalarShape(kind="gaussian", amplitude=-1.2, center=(0.5, 0.0, 0.1), width=0.9),
    ScalarShape(kind="linear", slope=(0.4, 0.0, -0.3)),
])
def test_scalar_grad_hess_match_fd(sh):
    x = np.array([0.7, -0.4, 0.2])
    np.testing.assert_allclose(sh.grad(x), fd_grad(sh.value, x), atol=1e-8)
    hess_fd = np.stack([fd_grad(lambda y: sh.grad(y)[a], x) for a in range(3)])
    np.testing.assert_allclose(sh.hess(x), hess_fd, atol=1e-6)


@pytest.mark.parametrize("vs", [
    VectorShape(kind="uniform", value_vec=(0.1, -0.2, 0.5)),
    VectorShape(kind="linear", value_vec=(0.1, 0.0, 0.2),
                matrix=((0.3, 0.0, 0.1), (0.0, -0.2, 0.0), (0.5, 0.0, 0.0))),
    VectorShape(kind="gaussian", value_vec=(0.0, 0.3, 0.4),
                center=(0.2, 0.0, 0.0), width=1.1),
])
def test_vector_jac_matches_fd(vs):
    x = np.array([0.4, 0.1, -0.6])
    jac_fd = np.stack([fd_grad(lambda y: vs.value(y)[a], x) for a in range(3)])
    np.testing.assert_allclose(vs.jac(x), jac_fd, atol=1e-7)


def test_batched_evaluation_shapes():
    sh = ScalarShape(kind="gaussian", amplitude=1.0, width=0.7)
    xs = np.zeros((5, 4, 3))
    assert sh.value(xs).shape == (5, 4)
    assert sh.grad(xs).shape == (5, 4, 3)
    vs = VectorShape(kind="gaussian", value_vec=(1.0, 0.0, 0.0), width=0.7)
    assert vs.value(xs).shape == (5, 4, 3)
    assert vs.jac(xs).shape == (5, 4, 3, 3)


class TestFieldSet:
    def setup_method(self):
        self.fs = FieldSet(
            u0=ScalarShape(kind="harmonic", amplitude=1.0),
            control_basis=(ScalarShape(kind="linear", slope=(1.0, 0.0, 0.0)),
                           ScalarShape(kind="gaussian", amplitude=1.0, width=1.0)),
            magnetic=VectorShape(kind="uniform", value_vec=(0.0, 0.0, 0.4)),
            rashba=VectorShape(kind="uniform", value_vec=(0.0, 0.0, 0.7)),
        )

    def test_affine_in_control(self):
        x = np.array([1.5, 0.0, 0.0])
        u = np.array([2.0, -1.0])
        base = self.fs.eval_potential(x, np.zeros(2))
        phi0 = self.fs.control_potential(0, x)
        phi1 = self.fs.control_potential(1, x)
        assert self.fs.eval_potential(x, u) == pytest.approx(base + 2 * phi0 - phi1)

    def test_electric_is_minus_grad(self):
        x = np.array([0.8, -0.3, 0.2])
        u = np.array([0.5, 1.0])
        fun = lambda y: self.fs.eval_potential(y, u)
        np.testing.assert_allclose(self.fs.eval_electric(x, u), -fd_grad(fun, x),
                                   atol=1e-8)

    def test_precession_field_cross_structure(self):
        x = np.array([1.0, 0.0, 0.0])
        p = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(
            self.fs.eval_total_precession_field(x, p), [0.0, 1.4, 0.8])
        expected = 2.0 * (self.fs.eval_magnetic(x)
                          - np.cross(p, self.fs.eval_rashba(x)))
        np.testing.assert_allclose(
            self.fs.eval_total_precession_field(x, p), expected)

    def test_control_count_mismatch_raises(self):
        with pytest.raises(ConfigurationError):
            self.fs.eval_potential(np.zeros(3), np.zeros(3))

    def test_uniform_detection(self):
        assert self.fs.uniform_rashba_zeeman()
        bumpy = FieldSet(u0=ScalarShape(kind="zero"),
                         rashba=VectorShape(kind="gaussian",
                                            value_vec=(0.0, 0.0, 1.0), width=1.0))
        assert not bumpy.uniform_rashba_zeeman()


@given(x=st.floats(-3, 3), u1=st.floats(-2, 2), u2=st.floats(-2, 2))
@settings(max_examples=40, deadline=None)
def test_potential_affine_property(x, u1, u2):
    """U(x, u) - U(x, 0) must be exactly linear in u."""
    fs = FieldSet(
        u0=ScalarShape(kind="gaussian", amplitude=0.9, width=1.3),
        control_basis=(ScalarShape(kind="linear", slope=(1.0, 0.0, 0.0)),),
    )
    pt = np.array([x, 0.0, 0.0])
    v1 = fs.eval_potential(pt, np.array([u1]))
    v2 = fs.eval_potential(pt, np.array([u2]))
    v12 = fs.eval_potential(pt, np.array([0.5 * (u1 + u2)]))
    assert v12 == pytest.approx(0.5 * (v1 + v2), abs=1e-12)


def test_embed_line():
    xs = np.array([1.0, -2.0])
    out = embed_line(xs)
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out[:, 0], xs)
    np.testing.assert_allclose(out[:, 1:], 0.0)


def test_config_round_trip():
    cfg = {
        "potential": {"kind": "harmonic", "amplitude": 0.5},
        "control_basis": [{"kind": "linear", "slope": [1.0, 0.0, 0.0]}],
        "magnetic": {"kind": "uniform", "value": [0.0, 0.0, 0.3]},
        "rashba": {"kind": "gaussian", "value": [0.0, 0.0, 0.6],
                   "center": [0.0, 0.0, 0.0], "width": 2.0},
    }
    fs = fieldset_from_config(cfg)
    assert fs.n_controls == 1
    x = np.array([0.5, 0.0, 0.0])
    assert fs.eval_potential(x, np.array([0.0])) == pytest.approx(0.0625)
    np.testing.assert_allclose(fs.eval_magnetic(x), [0.0, 0.0, 0.3])


def test_bad_kind_rejected():
    with pytest.raises(ConfigurationError):
        scalar_shape_from_config({"kind": "septic"})
    with pytest.raises(ConfigurationError):
        vector_shape_from_config({"kind": "spiral"})
