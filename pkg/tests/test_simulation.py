"""Leapfrog stepping: exchange ordering, conservation, reversal."""
import numpy as np
import pytest

from hybridwave.coupling import build_interface_operators
from hybridwave.fdm import StaggeredLayout2D, build_fdm_operators
from hybridwave.fem import FemBasis, assemble, quadrature_rule
from hybridwave.medium import IsotropicMedium
from hybridwave.mesh import structured_mesh
from hybridwave.sbp1d import GridAxis1D
from hybridwave.simulation import (
    HybridModel,
    HybridState,
    ModelError,
    SimClock,
    UnstableRunError,
    leapfrog_step,
    run_model,
    sample_receivers,
    time_reversed,
    validate_model,
)
from hybridwave.sources import (
    Receiver,
    RickerSource,
    place_fdm_receiver,
    place_fdm_source,
    place_fem_receiver,
    place_fem_source,
)

UNIT_MEDIUM = IsotropicMedium(1.0, 2.0, 1.0)


def build_hybrid(nx=6, ny_fem=2, ny_fdm=8, dx=0.25, family="gauss3"):
    layout = StaggeredLayout2D(
        GridAxis1D(nx, dx, periodic=True), GridAxis1D(ny_fdm, dx, periodic=False)
    )
    fdm_ops = build_fdm_operators(layout, UNIT_MEDIUM, top_boundary="interface")
    mesh = structured_mesh(nx, ny_fem, dx, origin=(0.0, ny_fdm * dx))
    layout_name = "gauss_lobatto" if family == "gll3" else "equidistant"
    system = assemble(mesh, FemBasis(layout_name), quadrature_rule(family), UNIT_MEDIUM)
    exchange = build_interface_operators(nx, dx, family)
    return HybridModel(mode="hybrid", fdm_ops=fdm_ops, system=system, exchange=exchange)


def build_fem_only(nx=6, ny=4, dx=0.25, family="gauss3"):
    mesh = structured_mesh(nx, ny, dx)
    layout_name = "gauss_lobatto" if family == "gll3" else "equidistant"
    system = assemble(mesh, FemBasis(layout_name), quadrature_rule(family), UNIT_MEDIUM)
    return HybridModel(mode="fem", system=system)


def build_fdm_only(nx=6, ny=8, dx=0.25, top="free"):
    layout = StaggeredLayout2D(
        GridAxis1D(nx, dx, periodic=True),
        GridAxis1D(ny, dx, periodic=(top == "periodic")),
    )
    fdm_ops = build_fdm_operators(layout, UNIT_MEDIUM, top_boundary=top)
    return HybridModel(mode="fdm", fdm_ops=fdm_ops)


def smooth_state(model, seed=0, modes=2) -> HybridState:
    """Periodic-in-x superposition of a few long-wavelength products."""
    rng = np.random.default_rng(seed)
    state = HybridState.at_rest(model)

    def field_at(x, y, width, height):
        out = np.zeros(np.broadcast(x, y).shape)
        for k in range(1, modes + 1):
            amp, phase = rng.normal(), rng.uniform(0, 2 * np.pi)
            wobble = rng.uniform(0, 2 * np.pi)
            out += amp * np.sin(2 * np.pi * k * x / width + phase) * np.cos(
                np.pi * k * y / height + wobble
            )
        return out

    if model.fdm_ops is not None:
        layout = model.fdm_ops.layout
        width, height = layout.x_axis.length, layout.y_axis.length
        for name in ("vx", "vy", "sxx", "sxy", "syy"):
            x, y = layout.subgrid_coords(name)
            setattr(state.fdm, name, field_at(x, y, width, height).ravel())
    if model.system is not None:
        coords = model.system.numbering.node_coords
        x, y = coords[:, 0], coords[:, 1]
        # the seam column is merged away, so the period is one node gap
        # beyond the largest stored x
        xs = np.unique(x)
        width = x.max() - x.min() + (xs[1] - xs[0])
        span = max(y.max() - y.min(), 1.0)
        state.fem.b = np.concatenate(
            [field_at(x, y, width, span), field_at(x, y, width, span)]
        )
        state.fem.xi = np.concatenate(
            [field_at(x, y, width, span), field_at(x, y, width, span)]
        )
    return state


def state_allclose(a: HybridState, b: HybridState, rtol, atol):
    parts = []
    if a.fdm is not None:
        parts += [(getattr(a.fdm, n), getattr(b.fdm, n)) for n in ("vx", "vy", "sxx", "sxy", "syy")]
    if a.fem is not None:
        parts += [(a.fem.b, b.fem.b), (a.fem.xi, b.fem.xi)]
    for left, right in parts:
        np.testing.assert_allclose(left, right, rtol=rtol, atol=atol)


def combine_states(model, coeffs_and_states) -> HybridState:
    out = HybridState.at_rest(model)
    for c, s in coeffs_and_states:
        if out.fdm is not None:
            for n in ("vx", "vy", "sxx", "sxy", "syy"):
                setattr(out.fdm, n, getattr(out.fdm, n) + c * getattr(s.fdm, n))
        if out.fem is not None:
            out.fem.b = out.fem.b + c * s.fem.b
            out.fem.xi = out.fem.xi + c * s.fem.xi
    return out


class TestSimClock:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError, match="dt"):
            SimClock(dt=0.0, n_steps=10)
        with pytest.raises(ValueError, match="n_steps"):
            SimClock(dt=0.1, n_steps=-1)

    def test_time_tracks_the_step(self):
        clock = SimClock(dt=0.5, n_steps=4)
        assert clock.time == 0.0
        clock.advance()
        clock.advance()
        assert clock.step == 2
        assert clock.time == 1.0


class TestValidation:
    def test_consistent_hybrid_passes(self):
        validate_model(build_hybrid())
        validate_model(build_hybrid(family="gll3"))

    def test_single_region_modes_pass(self):
        validate_model(build_fem_only())
        validate_model(build_fdm_only())
        validate_model(build_fdm_only(top="periodic"))

    def test_unknown_mode(self):
        with pytest.raises(ModelError, match="mode"):
            validate_model(HybridModel(mode="both"))

    def test_mode_and_pieces_must_agree(self):
        hybrid = build_hybrid()
        with pytest.raises(ModelError):
            validate_model(HybridModel(mode="fem", system=hybrid.system, fdm_ops=hybrid.fdm_ops))
        with pytest.raises(ModelError):
            validate_model(HybridModel(mode="hybrid", system=hybrid.system, fdm_ops=hybrid.fdm_ops))

    def test_element_count_mismatch(self):
        hybrid = build_hybrid(nx=6)
        wrong = build_interface_operators(5, 0.25, "gauss3")
        broken = HybridModel(
            mode="hybrid", fdm_ops=hybrid.fdm_ops, system=hybrid.system, exchange=wrong
        )
        with pytest.raises(ModelError, match="interface elements"):
            validate_model(broken)

    def test_vertically_shifted_mesh_is_caught(self):
        hybrid = build_hybrid()
        mesh = structured_mesh(6, 2, 0.25, origin=(0.0, 1.1))
        system = assemble(mesh, FemBasis(), quadrature_rule("gauss3"), UNIT_MEDIUM)
        broken = HybridModel(
            mode="hybrid", fdm_ops=hybrid.fdm_ops, system=system, exchange=hybrid.exchange
        )
        with pytest.raises(ModelError, match="on top"):
            validate_model(broken)

    def test_quadrature_family_mismatch_is_caught(self):
        hybrid = build_hybrid(family="gauss3")
        wrong = build_interface_operators(6, 0.25, "gll3")
        broken = HybridModel(
            mode="hybrid", fdm_ops=hybrid.fdm_ops, system=hybrid.system, exchange=wrong
        )
        with pytest.raises(ModelError):
            validate_model(broken)

    def test_standalone_deep_region_must_not_couple(self):
        hybrid = build_hybrid()
        with pytest.raises(ModelError, match="standalone"):
            validate_model(HybridModel(mode="fdm", fdm_ops=hybrid.fdm_ops))

    def test_receiver_region_must_exist(self):
        fem = build_fem_only()
        layout = build_fdm_only().fdm_ops.layout
        stray = place_fdm_receiver(Receiver(location=(0.4, 0.3)), layout)
        with pytest.raises(ModelError, match="receiver"):
            validate_model(
                HybridModel(mode="fem", system=fem.system, receivers=(stray,))
            )


class TestStepBasics:
    def test_zero_state_is_a_fixed_point(self):
        model = build_hybrid()
        state = HybridState.at_rest(model)
        leapfrog_step(state, model, SimClock(dt=0.01, n_steps=1))
        for name in ("vx", "vy", "sxx", "sxy", "syy"):
            assert np.all(getattr(state.fdm, name) == 0.0)
        assert np.all(state.fem.b == 0.0)
        assert np.all(state.fem.xi == 0.0)

    def test_fdm_impulse_touches_only_the_injection_points(self):
        model = build_hybrid()
        src = place_fdm_source(
            RickerSource(5.0, 0.25, 1e6, (0.6, 0.6)), model.fdm_ops.layout
        )
        sourced = HybridModel(
            mode="hybrid",
            fdm_ops=model.fdm_ops,
            system=model.system,
            exchange=model.exchange,
            fdm_sources=(src,),
        )
        state = HybridState.at_rest(sourced)
        leapfrog_step(state, sourced, SimClock(dt=0.01, n_steps=1))
        assert np.flatnonzero(state.fdm.sxx).tolist() == [src.flat_index]
        assert np.flatnonzero(state.fdm.syy).tolist() == [src.flat_index]
        assert np.all(state.fdm.sxy == 0.0)
        assert np.all(state.fdm.vx == 0.0)
        assert np.all(state.fem.xi == 0.0)

    def test_fem_impulse_stays_in_the_element_footprint(self):
        # needs the diagonal-mass path: a consistent mass inverse is global
        model = build_hybrid(family="gll3")
        src = place_fem_source(
            RickerSource(5.0, 0.25, 1e6, (0.6, 2.3)), model.system
        )
        sourced = HybridModel(
            mode="hybrid",
            fdm_ops=model.fdm_ops,
            system=model.system,
            exchange=model.exchange,
            fem_sources=(src,),
        )
        state = HybridState.at_rest(sourced)
        clock = SimClock(dt=0.01, n_steps=2)
        leapfrog_step(state, sourced, clock)
        leapfrog_step(state, sourced, clock)
        n = sourced.system.n_nodes
        touched = set(src.nodes.tolist())
        assert set(np.flatnonzero(state.fem.xi[:n]).tolist()) <= touched
        assert set(np.flatnonzero(state.fem.xi[n:]).tolist()) <= touched
        assert np.count_nonzero(state.fem.xi) > 0
        # the source sits away from the interface, so nothing leaks down
        for name in ("vx", "vy", "sxx", "sxy", "syy"):
            assert np.all(getattr(state.fdm, name) == 0.0)

    def test_superposition(self):
        # step at t = 0.3 so the source term is active: the update must be
        # affine, with the source as the constant part
        model = build_hybrid()
        src = place_fem_source(RickerSource(5.0, 0.25, 3.0, (0.6, 2.3)), model.system)
        sourced = HybridModel(
            mode="hybrid",
            fdm_ops=model.fdm_ops,
            system=model.system,
            exchange=model.exchange,
            fem_sources=(src,),
        )
        a = smooth_state(sourced, seed=1)
        b = smooth_state(sourced, seed=2)
        zero = HybridState.at_rest(sourced)
        summed = combine_states(sourced, [(1.0, a), (1.0, b)])
        for state in (a, b, zero, summed):
            leapfrog_step(state, sourced, SimClock(dt=0.01, n_steps=40, step=30))
        assert np.any(zero.fem.xi != 0.0)
        linear = combine_states(sourced, [(1.0, a), (1.0, b), (-1.0, zero)])
        state_allclose(linear, summed, rtol=1e-13, atol=1e-13)

    def test_two_reversals_cancel(self):
        model = build_hybrid()
        state = smooth_state(model, seed=5)
        clock = SimClock(dt=0.01, n_steps=1)
        back = time_reversed(time_reversed(state, model, clock), model, clock)
        state_allclose(back, state, rtol=1e-13, atol=1e-14)


class TestReversibility:
    @pytest.mark.parametrize("family", ["gauss3", "gll3"])
    def test_hybrid_run_rewinds_to_the_start(self, family):
        model = build_hybrid(nx=8, ny_fem=3, ny_fdm=8, dx=0.25, family=family)
        start = smooth_state(model, seed=11)
        forward = run_model(
            model, SimClock(dt=0.01, n_steps=100), energy_stride=100, initial_state=start
        )
        flipped = time_reversed(forward.state, model, forward.clock)
        backward = run_model(
            model, SimClock(dt=0.01, n_steps=100), energy_stride=100, initial_state=flipped
        )
        recovered = time_reversed(backward.state, model, backward.clock)
        state_allclose(recovered, start, rtol=1e-10, atol=1e-12)

    def test_single_region_runs_rewind(self):
        for model in (build_fem_only(), build_fdm_only()):
            start = smooth_state(model, seed=3)
            forward = run_model(
                model, SimClock(dt=0.01, n_steps=60), energy_stride=60, initial_state=start
            )
            flipped = time_reversed(forward.state, model, forward.clock)
            backward = run_model(
                model, SimClock(dt=0.01, n_steps=60), energy_stride=60, initial_state=flipped
            )
            recovered = time_reversed(backward.state, model, backward.clock)
            state_allclose(recovered, start, rtol=1e-10, atol=1e-12)


class TestEnergyAndAudit:
    def test_staggered_energy_is_flat_on_a_source_free_run(self):
        model = build_hybrid(nx=8, ny_fem=3, ny_fdm=8)
        start = smooth_state(model, seed=7)
        out = run_model(
            model, SimClock(dt=0.005, n_steps=200), energy_stride=10, initial_state=start
        )
        total = out.energy[:, 4]
        assert total.shape == (21,)
        drift = (total.max() - total.min()) / total.mean()
        assert drift < 1e-11

    def test_naive_energy_oscillates_more(self):
        model = build_hybrid(nx=8, ny_fem=3, ny_fdm=8)
        start = smooth_state(model, seed=7)
        coarse = run_model(
            model, SimClock(dt=0.008, n_steps=100), energy_stride=5, initial_state=start
        )
        total = coarse.energy[:, 4]
        naive = coarse.energy[:, 5]
        flat = (total.max() - total.min()) / total.mean()
        wobble = (naive.max() - naive.min()) / naive.mean()
        assert wobble > 100 * flat

    def test_interface_power_cancels_along_the_run(self):
        for family in ("gauss3", "gll3"):
            model = build_hybrid(nx=8, ny_fem=3, ny_fdm=8, family=family)
            start = smooth_state(model, seed=13)
            out = run_model(
                model,
                SimClock(dt=0.005, n_steps=50),
                energy_stride=50,
                audit=True,
                initial_state=start,
            )
            scale = max(out.energy[:, 4].max(), 1.0)
            assert out.audit_max <= 1e-12 * scale

    def test_energy_row_counts_and_times(self):
        model = build_fdm_only()
        out = run_model(model, SimClock(dt=0.01, n_steps=10), energy_stride=3)
        # multiples of three below ten, no final row since 3 does not divide 10
        np.testing.assert_allclose(out.energy_times, [0.0, 0.03, 0.06, 0.09])
        dividing = run_model(model, SimClock(dt=0.01, n_steps=9), energy_stride=3)
        np.testing.assert_allclose(dividing.energy_times, [0.0, 0.03, 0.06, 0.09])
        assert dividing.energy.shape == (4, 6)

    def test_zero_step_run_yields_one_zero_energy_row(self):
        model = build_fdm_only()
        out = run_model(model, SimClock(dt=0.01, n_steps=0))
        assert out.seismogram.shape == (0, 0)
        assert out.energy.shape == (1, 6)
        assert np.all(out.energy == 0.0)


class TestRunOutputs:
    def test_runs_are_deterministic(self):
        model = build_hybrid()
        rec = (
            place_fdm_receiver(Receiver((0.7, 0.5)), model.fdm_ops.layout),
            place_fem_receiver(Receiver((0.7, 2.3)), model.system),
        )
        src = place_fem_source(RickerSource(5.0, 0.25, 3.0, (0.6, 2.3)), model.system)
        sourced = HybridModel(
            mode="hybrid",
            fdm_ops=model.fdm_ops,
            system=model.system,
            exchange=model.exchange,
            fem_sources=(src,),
            receivers=rec,
        )
        first = run_model(sourced, SimClock(dt=0.01, n_steps=40), energy_stride=10)
        second = run_model(sourced, SimClock(dt=0.01, n_steps=40), energy_stride=10)
        assert np.array_equal(first.seismogram, second.seismogram)
        assert np.array_equal(first.energy, second.energy)
        assert first.seismogram.shape == (40, 2)
        assert np.any(first.seismogram != 0.0)
        np.testing.assert_allclose(first.times, (np.arange(40) + 0.5) * 0.01)

    def test_receiver_sampling_matches_the_state(self):
        model = build_fdm_only()
        rec = place_fdm_receiver(Receiver((0.7, 0.5)), model.fdm_ops.layout)
        with_rec = HybridModel(mode="fdm", fdm_ops=model.fdm_ops, receivers=(rec,))
        state = smooth_state(with_rec, seed=2)
        values = sample_receivers(state, with_rec)
        assert values[0] == state.fdm.vy[rec.flat_index]

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_unstable_run_raises_with_the_failing_step(self):
        model = build_hybrid()
        start = smooth_state(model, seed=1)
        with pytest.raises(UnstableRunError) as excinfo:
            run_model(model, SimClock(dt=10.0, n_steps=400), initial_state=start)
        err = excinfo.value
        assert 0 < err.step < 400
        assert err.partial.seismogram.shape == (err.step, 0)

    def test_used_clock_is_rejected(self):
        model = build_fdm_only()
        clock = SimClock(dt=0.01, n_steps=5)
        run_model(model, clock)
        with pytest.raises(ValueError, match="already run"):
            run_model(model, clock)

    def test_energy_stride_must_be_positive(self):
        model = build_fdm_only()
        with pytest.raises(ValueError, match="energy_stride"):
            run_model(model, SimClock(dt=0.01, n_steps=5), energy_stride=0)
