"""Wavelet shape, source injection, and receiver sampling."""
import math
import warnings

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given
from hypothesis import strategies as st

from hybridwave.fdm import FdmState, StaggeredLayout2D
from hybridwave.fem import FemBasis, assemble, quadrature_rule
from hybridwave.medium import IsotropicMedium
from hybridwave.mesh import structured_mesh
from hybridwave.sbp1d import GridAxis1D
from hybridwave.sources import (
    FdmSource,
    PlacementError,
    Receiver,
    RickerSource,
    place_fdm_receiver,
    place_fdm_source,
    place_fem_receiver,
    place_fem_source,
    ricker,
    ricker_integral,
)

UNIT_MEDIUM = IsotropicMedium(1.0, 2.0, 1.0)


def quiet_source(**overrides) -> RickerSource:
    kwargs = dict(frequency=5.0, delay=0.25, amplitude=1.0, location=(0.5, 0.5))
    kwargs.update(overrides)
    return RickerSource(**kwargs)


def small_layout(nx=8, ny=6, dx=0.125, origin=(0.0, 0.0)) -> StaggeredLayout2D:
    return StaggeredLayout2D(
        GridAxis1D(nx, dx, periodic=True),
        GridAxis1D(ny, dx, periodic=False),
        origin=origin,
    )


@pytest.fixture(scope="module")
def system():
    mesh = structured_mesh(4, 3, 0.25)
    return assemble(mesh, FemBasis(), quadrature_rule("gauss3"), UNIT_MEDIUM)


class TestRickerWavelet:
    def test_peak_is_one_at_the_delay(self):
        assert ricker(0.25, frequency=5.0, delay=0.25) == 1.0
        assert ricker(1.5, frequency=0.7, delay=1.5) == 1.0

    @given(
        st.floats(0.5, 20.0),
        st.floats(0.05, 2.0),
        st.floats(-3.0, 3.0),
    )
    def test_even_around_the_delay(self, frequency, delay, offset):
        left = ricker(delay - offset, frequency, delay)
        right = ricker(delay + offset, frequency, delay)
        assert left == pytest.approx(right, rel=1e-12, abs=1e-12)

    def test_symmetry_is_bitwise_on_dyadic_offsets(self):
        offsets = np.arange(64) * 0.0078125
        left = ricker(0.25 - offsets, 5.0, 0.25)
        right = ricker(0.25 + offsets, 5.0, 0.25)
        assert np.array_equal(left, right)

    def test_zero_crossings(self):
        # the parabolic factor vanishes where 2 (pi f s)^2 = 1
        root = 1.0 / (math.sqrt(2.0) * math.pi * 5.0)
        for sign in (-1.0, 1.0):
            assert ricker(0.25 + sign * root, 5.0, 0.25) == pytest.approx(
                0.0, abs=1e-13
            )

    def test_switch_on_value_is_tiny_for_the_flat_benchmark(self):
        arg = (math.pi * 5.0 * 0.25) ** 2
        direct = (1.0 - 2.0 * arg) * math.exp(-arg)
        assert ricker(0.0, 5.0, 0.25) == pytest.approx(direct, rel=1e-15)
        assert abs(direct) < 1e-5

    def test_tail_beyond_twice_the_delay_is_negligible(self):
        t = np.linspace(0.5, 1.0, 200)
        assert np.abs(ricker(t, 5.0, 0.25)).max() < 1e-4


class TestRickerIntegral:
    def test_starts_at_exact_zero(self):
        assert ricker_integral(0.0, 5.0, 0.25) == 0.0
        assert ricker_integral(0.0, 1.3, 0.8) == 0.0

    @pytest.mark.parametrize("t", [0.05, 0.2, 0.25, 0.3, 0.45, 0.7])
    def test_matches_numerical_quadrature(self, t):
        oracle, err = scipy.integrate.quad(
            lambda u: ricker(u, 5.0, 0.25), 0.0, t, epsabs=1e-14, epsrel=1e-13
        )
        assert err < 1e-12
        assert ricker_integral(t, 5.0, 0.25) == pytest.approx(
            oracle, rel=1e-10, abs=1e-13
        )

    @given(st.floats(0.01, 1.5))
    def test_derivative_recovers_the_wavelet(self, t):
        h = 1e-6
        slope = (
            ricker_integral(t + h, 2.0, 0.6) - ricker_integral(t - h, 2.0, 0.6)
        ) / (2 * h)
        assert slope == pytest.approx(float(ricker(t, 2.0, 0.6)), abs=1e-7)


class TestRickerSource:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError, match="frequency"):
            quiet_source(frequency=0.0)
        with pytest.raises(ValueError, match="delay"):
            quiet_source(delay=-0.1)

    def test_warns_when_the_switch_on_is_visible(self):
        with pytest.warns(UserWarning, match="switch-on"):
            quiet_source(frequency=1.0, delay=0.1)

    def test_flat_benchmark_parameters_stay_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            quiet_source(frequency=5.0, delay=0.25)

    def test_wavelet_cuts_to_exact_zero(self):
        src = quiet_source()
        assert src.wavelet(0.25) == 1.0
        assert src.wavelet(0.5) == 0.0
        assert src.wavelet(3.0) == 0.0

    def test_integral_cuts_to_exact_zero(self):
        src = quiet_source()
        assert src.wavelet_integral(0.3) != 0.0
        assert src.wavelet_integral(0.5) == 0.0
        assert src.wavelet_integral(10.0) == 0.0


class TestFdmPlacement:
    def test_snaps_to_the_nearest_normal_stress_point(self):
        layout = small_layout()
        # sxx points sit at ((i + 1/2) dx, (j + 1/2) dx); aim near (2, 3)
        src = quiet_source(location=(0.32, 0.42))
        placed = place_fdm_source(src, layout)
        assert placed.flat_index == 2 * 6 + 3

    def test_exact_grid_point_is_kept(self):
        layout = small_layout()
        placed = place_fdm_source(quiet_source(location=(0.3125, 0.4375)), layout)
        assert placed.flat_index == 2 * 6 + 3

    def test_respects_the_layout_origin(self):
        layout = small_layout(origin=(2.0, 1.0))
        placed = place_fdm_source(quiet_source(location=(2.0625, 1.0625)), layout)
        assert placed.flat_index == 0

    def test_rejects_points_outside_the_region(self):
        layout = small_layout()
        with pytest.raises(PlacementError, match="outside"):
            place_fdm_source(quiet_source(location=(0.5, 0.76)), layout)
        with pytest.raises(PlacementError, match="outside"):
            place_fdm_source(quiet_source(location=(1.5, 0.5)), layout)

    def test_stress_increment_peaks_at_the_delay(self):
        layout = small_layout()
        placed = place_fdm_source(quiet_source(amplitude=3.0), layout)
        dt = 1e-3
        expected = 3.0 * 1.0 * dt / 0.125**2
        assert placed.stress_increment(0.25, dt) == pytest.approx(expected, rel=1e-15)

    def test_stress_increment_vanishes_after_the_cutoff(self):
        layout = small_layout()
        placed = place_fdm_source(quiet_source(), layout)
        assert placed.stress_increment(0.5, 1e-3) == 0.0
        assert placed.stress_increment(2.0, 1e-3) == 0.0

    def test_increment_is_linear_in_amplitude(self):
        layout = small_layout()
        one = place_fdm_source(quiet_source(amplitude=1.0), layout)
        five = place_fdm_source(quiet_source(amplitude=5.0), layout)
        t, dt = 0.21, 2e-3
        assert five.stress_increment(t, dt) == pytest.approx(
            5.0 * one.stress_increment(t, dt), rel=1e-15
        )


class TestFemPlacement:
    def test_explosive_source_exerts_no_net_force(self, system):
        placed = place_fem_source(quiet_source(location=(0.4, 0.35)), system)
        assert placed.pattern_x.sum() == pytest.approx(0.0, abs=1e-12)
        assert placed.pattern_y.sum() == pytest.approx(0.0, abs=1e-12)

    def test_force_is_zero_at_time_zero(self, system):
        placed = place_fem_source(quiet_source(location=(0.4, 0.35)), system)
        rhs = np.zeros(2 * system.n_nodes)
        placed.add_force(0.0, rhs)
        assert np.all(rhs == 0.0)

    def test_force_is_zero_after_the_cutoff(self, system):
        placed = place_fem_source(quiet_source(location=(0.4, 0.35)), system)
        rhs = np.zeros(2 * system.n_nodes)
        placed.add_force(0.5, rhs)
        placed.add_force(7.0, rhs)
        assert np.all(rhs == 0.0)

    def test_force_matches_the_gradient_pattern(self, system):
        src = quiet_source(amplitude=2.5, location=(0.4, 0.35))
        placed = place_fem_source(src, system)
        rhs = np.zeros(2 * system.n_nodes)
        t = 0.3
        placed.add_force(t, rhs)
        strength = src.wavelet_integral(t)
        expected_x = np.zeros(system.n_nodes)
        expected_x[placed.nodes] = strength * placed.pattern_x
        np.testing.assert_allclose(rhs[: system.n_nodes], expected_x, rtol=0, atol=0)
        assert np.count_nonzero(rhs) > 0

    def test_load_is_a_discrete_divergence(self, system):
        # pairing the load with a linear displacement field recovers the
        # (negated) divergence integral: u = (x, y) has div u = 2, so
        # u . f = -amplitude * G * (sum_a x_a dphi_a/dx + y_a dphi_a/dy)
        # = -amplitude * G * 2 at the source point.
        src = quiet_source(amplitude=1.0, location=(0.4, 0.35))
        placed = place_fem_source(src, system)
        coords = system.numbering.node_coords
        u = np.concatenate([coords[:, 0], coords[:, 1]])
        rhs = np.zeros(2 * system.n_nodes)
        t = 0.3
        placed.add_force(t, rhs)
        expected = -src.wavelet_integral(t) * 2.0
        assert u @ rhs == pytest.approx(expected, rel=1e-12)

    def test_rejects_points_outside_the_mesh(self, system):
        with pytest.raises(PlacementError, match="source"):
            place_fem_source(quiet_source(location=(0.5, 2.0)), system)


class TestReceivers:
    def test_fdm_receiver_reads_one_vertical_velocity_entry(self):
        layout = small_layout()
        # vy points sit at ((i + 1/2) dx, j dx); aim near (3, 2)
        placed = place_fdm_receiver(Receiver(location=(0.44, 0.26)), layout)
        ny = layout.subgrid_shape("vy")[1]
        assert placed.flat_index == 3 * ny + 2
        state = FdmState.zeros(layout)
        state.vy[:] = np.arange(state.vy.size, dtype=float)
        assert placed.sample(state.vy) == float(3 * ny + 2)

    def test_fdm_receiver_bounds(self):
        layout = small_layout()
        with pytest.raises(PlacementError, match="receiver"):
            place_fdm_receiver(Receiver(location=(0.5, -0.2)), layout)

    def test_fem_receiver_reads_the_vertical_component(self):
        mesh = structured_mesh(4, 3, 0.25)
        system = assemble(mesh, FemBasis(), quadrature_rule("gauss3"), UNIT_MEDIUM)
        placed = place_fem_receiver(Receiver(location=(0.4, 0.35)), system)
        xi = np.zeros(2 * system.n_nodes)
        xi[system.n_nodes :] = 0.75
        assert placed.sample(xi) == pytest.approx(0.75, rel=1e-13)

    def test_fem_receiver_interpolates_exactly(self):
        mesh = structured_mesh(4, 3, 0.25)
        system = assemble(mesh, FemBasis(), quadrature_rule("gauss3"), UNIT_MEDIUM)
        placed = place_fem_receiver(Receiver(location=(0.4, 0.35)), system)
        coords = system.numbering.node_coords
        xi = np.zeros(2 * system.n_nodes)
        xi[system.n_nodes :] = 1.0 + 2.0 * coords[:, 0] - coords[:, 1]
        assert placed.sample(xi) == pytest.approx(1.0 + 0.8 - 0.35, rel=1e-13)

    def test_fem_receiver_outside_raises(self):
        mesh = structured_mesh(4, 3, 0.25)
        system = assemble(mesh, FemBasis(), quadrature_rule("gauss3"), UNIT_MEDIUM)
        with pytest.raises(PlacementError, match="receiver"):
            place_fem_receiver(Receiver(location=(0.4, 5.0)), system)


def test_fdm_source_is_reusable_across_steps():
    layout = small_layout()
    placed = place_fdm_source(quiet_source(), layout)
    assert isinstance(placed, FdmSource)
    first = placed.stress_increment(0.2, 1e-3)
    second = placed.stress_increment(0.2, 1e-3)
    assert first == second
