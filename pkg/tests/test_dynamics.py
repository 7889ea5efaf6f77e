"""Evolution operator and integrator checks.

The fused transform path is validated against a literal term-by-term
assembly of the evolution equations; the three RHS modes are validated
against each other in their overlap regimes.
"""

import numpy as np
import pytest

from spinoc.dynamics import (EvolutionOperator, EvolutionSpec, a_minus, a_plus,
                             cfl_timestep, integrate, reference_rhs)
from spinoc.errors import ConfigurationError, IntegrationError
from spinoc.fields import FieldSet, ScalarShape, VectorShape
from spinoc.oracles import nyquist_free_noise
from spinoc.wigner import (PhaseGrid, WignerState, coherent_wigner, l2_norm,
                           moments)


def _general_fields():
    return FieldSet(
        u0=ScalarShape("gaussian", amplitude=0.8, center=(0.3, 0, 0), width=1.1),
        control_basis=(
            ScalarShape("linear", slope=(1.0, 0, 0)),
            ScalarShape("gaussian", amplitude=1.0, center=(-0.5, 0, 0), width=0.9),
        ),
        magnetic=VectorShape("gaussian", value_vec=(0.4, -0.3, 0.5),
                             center=(0.2, 0, 0), width=1.3),
        rashba=VectorShape("gaussian", value_vec=(0.0, 0.6, -0.45),
                           center=(-0.1, 0, 0), width=1.5),
    )


def _noise_state(grid, hbar, seed=10):
    data = np.stack([nyquist_free_noise(grid, seed=seed + c) for c in range(4)])
    return WignerState(grid, data, hbar)


class TestRhsModes:
    def test_fused_matches_reference_assembly(self, tiny_grid):
        grid = PhaseGrid(16, 16, -4.0, 8.0, -4.0, 8.0)
        state = _noise_state(grid, hbar=0.31)
        spec = EvolutionSpec(fields=_general_fields(), mass=1.3, mode="full")
        u = np.array([0.37, -0.21])
        fast = EvolutionOperator(grid, spec, state.hbar).rhs(state.data, u)
        slow = reference_rhs(state, spec, u)
        assert np.abs(fast - slow).max() < 1e-12 * np.abs(slow).max()

    def test_uniform_mode_matches_full(self):
        grid = PhaseGrid(16, 16, -4.0, 8.0, -4.0, 8.0)
        fields = FieldSet(
            u0=ScalarShape("gaussian", amplitude=0.8, center=(0.3, 0, 0),
                           width=1.1),
            control_basis=(ScalarShape("linear", slope=(1.0, 0, 0)),),
            magnetic=VectorShape("uniform", value_vec=(0.4, -0.3, 0.5)),
            rashba=VectorShape("uniform", value_vec=(0.0, 0.6, -0.45)),
        )
        state = _noise_state(grid, hbar=0.27)
        u = np.array([0.4])
        rhs_full = EvolutionOperator(
            grid, EvolutionSpec(fields=fields, mode="full"), state.hbar
        ).rhs(state.data, u)
        rhs_uni = EvolutionOperator(
            grid, EvolutionSpec(fields=fields, mode="uniform"), state.hbar
        ).rhs(state.data, u)
        assert np.abs(rhs_full - rhs_uni).max() < 1e-10 * np.abs(rhs_uni).max()

    def test_uniform_mode_rejects_varying_fields(self):
        with pytest.raises(ConfigurationError):
            EvolutionSpec(fields=_general_fields(), mode="uniform")

    def test_semiclassical_matches_full_without_spin_orbit(self):
        # with K = B = 0 and a linear potential both truncations are exact,
        # so the two modes must agree to rounding
        grid = PhaseGrid(32, 32, -4.0, 8.0, -4.0, 8.0)
        fields = FieldSet(u0=ScalarShape("linear", slope=(0.7, 0, 0)))
        state = _noise_state(grid, hbar=0.2)
        rf = EvolutionOperator(
            grid, EvolutionSpec(fields=fields, mode="full"), 0.2
        ).rhs(state.data, np.zeros(0))
        rs = EvolutionOperator(
            grid, EvolutionSpec(fields=fields, mode="semiclassical"), 0.2
        ).rhs(state.data, np.zeros(0))
        assert np.abs(rf - rs).max() < 1e-11 * np.abs(rf).max()

    def test_semiclassical_truncation_error_is_second_order(self):
        grid = PhaseGrid(64, 64, -6.0, 12.0, -6.0, 12.0)
        fields = FieldSet(
            u0=ScalarShape("gaussian", amplitude=0.6, center=(0.4, 0, 0),
                           width=1.4),
            magnetic=VectorShape("gaussian", value_vec=(0.3, -0.2, 0.4),
                                 center=(0.1, 0, 0), width=1.8),
            rashba=VectorShape("gaussian", value_vec=(0.0, 0.5, -0.35),
                               center=(-0.2, 0, 0), width=2.0),
        )
        st = coherent_wigner(grid, hbar=1.0, xbar=0.0, pbar=0.5, sigma=1.0,
                             dbar=(0.3, -0.4, 0.5))
        errs = []
        for hb in (0.4, 0.2, 0.1):
            rf = EvolutionOperator(
                grid, EvolutionSpec(fields=fields, mode="full"), hb
            ).rhs(st.data, np.zeros(0))
            rs = EvolutionOperator(
                grid, EvolutionSpec(fields=fields, mode="semiclassical"), hb
            ).rhs(st.data, np.zeros(0))
            errs.append(np.abs(rf - rs).max())
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 1.8) and np.all(rates < 2.2)


class TestOperatorComponents:
    def test_spin_orbit_couplings_vanish_on_first_component(self, tiny_grid):
        fields = _general_fields()
        h = nyquist_free_noise(tiny_grid, seed=3)
        assert np.all(a_plus(h, 1, tiny_grid, fields, 0.3) == 0.0)
        assert np.all(a_minus(h, 1, tiny_grid, fields, 0.3) == 0.0)

    def test_spin_orbit_couplings_are_linear(self, tiny_grid):
        fields = _general_fields()
        h1 = nyquist_free_noise(tiny_grid, seed=3)
        h2 = nyquist_free_noise(tiny_grid, seed=4)
        for op in (a_plus, a_minus):
            lhs = op(2.0 * h1 - h2, 2, tiny_grid, fields, 0.3)
            rhs = 2.0 * op(h1, 2, tiny_grid, fields, 0.3) \
                - op(h2, 2, tiny_grid, fields, 0.3)
            np.testing.assert_allclose(lhs, rhs, atol=1e-13)


class TestIntegrate:
    def test_free_streaming_moves_means_exactly(self):
        # x-resolution keeps the packet's Nyquist amplitude below rounding;
        # the generator freezes that mode instead of translating it
        grid = PhaseGrid(128, 64, -8.0, 16.0, -8.0, 16.0)
        free = EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")))
        st = coherent_wigner(grid, hbar=0.25, xbar=-1.0, pbar=1.2, sigma=1.0,
                             dbar=(0.0, 0.0, 0.0))
        m = moments(integrate(st, free, t_final=1.0, dt=0.01).final)
        assert abs(m.mean_x - 0.2) < 1e-10
        assert abs(m.mean_p - 1.2) < 1e-12

    def test_l2_and_mass_conservation(self):
        grid = PhaseGrid(64, 64, -6.0, 12.0, -6.0, 12.0)
        fields = FieldSet(
            u0=ScalarShape("gaussian", amplitude=0.6, center=(0.4, 0, 0),
                           width=1.4),
            magnetic=VectorShape("gaussian", value_vec=(0.3, -0.2, 0.4),
                                 center=(0.1, 0, 0), width=1.8),
            rashba=VectorShape("gaussian", value_vec=(0.0, 0.5, -0.35),
                               center=(-0.2, 0, 0), width=2.0),
        )
        spec = EvolutionSpec(fields=fields)
        st = coherent_wigner(grid, hbar=0.2, xbar=-0.5, pbar=0.8, sigma=1.0,
                             dbar=(0.2, 0.3, -0.4))
        l0, m0 = l2_norm(st), moments(st).mass
        res = integrate(st, spec, t_final=0.5, dt=0.005)
        # L2 drift is pure RK4 time error; mass drift is set by the packet's
        # grid-tail amplitude (2e-16 at 128x128 for this state)
        assert abs(l2_norm(res.final) - l0) / l0 < 1e-10
        assert abs(moments(res.final).mass - m0) / m0 < 1e-8

    def test_uniform_zeeman_precession_matches_rotation(self):
        grid = PhaseGrid(64, 64, -8.0, 16.0, -8.0, 16.0)
        fields = FieldSet(u0=ScalarShape("zero"),
                          magnetic=VectorShape("uniform",
                                               value_vec=(0.0, 0.0, 0.7)))
        spec = EvolutionSpec(fields=fields)
        st = coherent_wigner(grid, hbar=0.2, xbar=0.0, pbar=0.0, sigma=1.0,
                             dbar=(1.0, 0.0, 0.0))
        horizon = 0.9
        res = integrate(st, spec, t_final=horizon, dt=0.0025)
        ang = -2.0 * 0.7 * horizon
        exact = np.array([np.cos(ang), np.sin(ang), 0.0])
        assert np.abs(np.array(moments(res.final).spin) - exact).max() < 1e-10

    def test_backward_integration_inverts_forward(self):
        grid = PhaseGrid(32, 32, -6.0, 12.0, -6.0, 12.0)
        spec = EvolutionSpec(fields=_general_fields())
        st = coherent_wigner(grid, hbar=0.25, xbar=-0.5, pbar=0.8, sigma=1.0,
                             dbar=(0.2, 0.3, -0.4))
        u = None
        fwd = integrate(st, spec, t_final=0.4, dt=0.004, u=u)
        back = integrate(fwd.final, spec, t_final=0.0, dt=0.004, u=u)
        err = np.abs(back.final.data - st.data).max()
        assert err < 1e-8 * np.abs(st.data).max()

    def test_snapshots_and_diagnostics(self):
        grid = PhaseGrid(32, 32, -6.0, 12.0, -6.0, 12.0)
        spec = EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")))
        st = coherent_wigner(grid, hbar=0.25, xbar=0.0, pbar=0.4, sigma=1.0,
                             dbar=(0.0, 0.0, 1.0))
        res = integrate(st, spec, t_final=1.0, dt=0.01,
                        snapshot_times=np.array([0.0, 0.5, 1.0]))
        assert [s.time for s in res.snapshots] == [0.0, 0.5, 1.0]
        assert res.diagnostics.shape[1] == 11
        times = res.diagnostics[:, 0]
        assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
        assert np.all(np.diff(times) > 0)
        # mass column stays constant along the run
        np.testing.assert_allclose(res.diagnostics[:, 1],
                                   res.diagnostics[0, 1], rtol=1e-9)

    def test_misaligned_snapshot_time_rejected(self):
        grid = PhaseGrid(16, 16, -4.0, 8.0, -4.0, 8.0)
        spec = EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")))
        st = coherent_wigner(grid, hbar=0.3, xbar=0.0, pbar=0.0, sigma=0.8,
                             dbar=(0.0, 0.0, 1.0))
        with pytest.raises(ConfigurationError):
            integrate(st, spec, t_final=1.0, dt=0.01,
                      snapshot_times=np.array([0.3337]))

    def test_unstable_step_aborts_with_last_state(self):
        grid = PhaseGrid(32, 32, -6.0, 12.0, -6.0, 12.0)
        fields = FieldSet(u0=ScalarShape("harmonic", amplitude=25.0))
        spec = EvolutionSpec(fields=fields)
        st = coherent_wigner(grid, hbar=0.25, xbar=1.5, pbar=0.0, sigma=1.0,
                             dbar=(0.0, 0.0, 1.0))
        with pytest.raises(IntegrationError) as excinfo:
            integrate(st, spec, t_final=50.0, dt=5.0)
        err = excinfo.value
        assert err.failing_time is not None
        assert err.last_state is not None
        assert np.isfinite(err.last_state.data).all()


class TestCfl:
    def test_step_limits_scale_with_fields(self):
        grid = PhaseGrid(64, 64, -6.0, 12.0, -6.0, 12.0)
        weak = FieldSet(u0=ScalarShape("harmonic", amplitude=0.5))
        strong = FieldSet(u0=ScalarShape("harmonic", amplitude=50.0))
        assert cfl_timestep(grid, weak, 1.0) > cfl_timestep(grid, strong, 1.0)

    def test_control_bound_tightens_step(self):
        grid = PhaseGrid(64, 64, -6.0, 12.0, -6.0, 12.0)
        fields = FieldSet(
            u0=ScalarShape("harmonic", amplitude=0.5),
            control_basis=(ScalarShape("linear", slope=(1.0, 0, 0)),),
        )
        free_dt = cfl_timestep(grid, fields, 1.0)
        driven_dt = cfl_timestep(grid, fields, 1.0, u_bound=50.0)
        assert driven_dt < free_dt

    def test_field_free_step_is_transport_limited(self):
        grid = PhaseGrid(64, 64, -6.0, 12.0, -6.0, 12.0)
        fields = FieldSet(u0=ScalarShape("zero"))
        dt = cfl_timestep(grid, fields, mass=2.0)
        assert dt == pytest.approx(0.5 * grid.dx * 2.0 / 6.0)


class TestSpecValidation:
    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigurationError):
            EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")),
                          mode="exact")

    def test_bad_mass_rejected(self):
        with pytest.raises(ConfigurationError):
            EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")), mass=0.0)

    def test_control_channel_mismatch_rejected(self):
        from spinoc.classical import ControlSignal
        grid = PhaseGrid(16, 16, -4.0, 8.0, -4.0, 8.0)
        spec = EvolutionSpec(fields=FieldSet(u0=ScalarShape("zero")))
        st = coherent_wigner(grid, hbar=0.3, xbar=0.0, pbar=0.0, sigma=0.8,
                             dbar=(0.0, 0.0, 1.0))
        u = ControlSignal(np.linspace(0.0, 1.0, 5), np.zeros((5, 2)))
        with pytest.raises(ConfigurationError):
            integrate(st, spec, t_final=1.0, dt=0.1, u=u)
