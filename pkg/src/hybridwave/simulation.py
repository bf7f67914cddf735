"""Staggered leapfrog integration of the coupled regions.

Time layout: stresses and displacement coefficients live at integer
steps, both velocity families at half steps.  One step maps the tuple
(stresses, b, velocities, xi) at level n to the same tuple at n + 1:

1. interface tractions of the deep region (integer level) feed the
   shallow region's penalty, and xi advances a full step;
2. the deep region's velocities advance on the integer-level stresses;
3. the freshly advanced xi is traced onto the interface quadrature
   points and mapped to the deep region's boundary grids;
4. the stresses advance on the new velocities plus source injection;
5. the displacement coefficients advance on the new xi.

Phases 1 and 2 consume only integer-level data, so the energy sampled
between phases 2 and 3 pairs each integer-level field with the two
half-level velocities around it; that staggered product is the exactly
conserved quadratic form of the scheme.
"""
from dataclasses import dataclass

import numpy as np

from .coupling import InterfaceOperators, fdm_to_fem, fem_to_fdm, quadrature_coords
from .fdm import (
    FdmOperators,
    FdmState,
    NonFiniteStateError,
    fdm_energy,
    interface_tractions,
    stress_rhs,
    velocity_rhs,
)
from .fem import (
    FemState,
    FemSystem,
    fem_energy,
    interface_penalty,
    interface_velocity_trace,
)
from .sources import FdmReceiver, FemReceiver

MODES = ("hybrid", "fem", "fdm")


class ModelError(ValueError):
    """The model bundle is internally inconsistent."""


class UnstableRunError(RuntimeError):
    """The integration produced non-finite values."""

    def __init__(self, step: int, time: float, reason: str):
        super().__init__(f"unstable run at step {step} (t = {time:g} s): {reason}")
        self.step = step
        self.time = time


@dataclass
class SimClock:
    """Step length, step count, and the current integer level."""

    dt: float
    n_steps: int
    step: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps}")

    @property
    def time(self) -> float:
        return self.step * self.dt

    def advance(self) -> None:
        self.step += 1


@dataclass(frozen=True)
class HybridModel:
    """Everything static about one simulation: discretizations of the
    regions in play, the interface exchange, and placed sources and
    receivers.  Exactly the pieces implied by ``mode`` must be present."""

    mode: str
    fdm_ops: FdmOperators | None = None
    system: FemSystem | None = None
    exchange: InterfaceOperators | None = None
    fdm_sources: tuple = ()
    fem_sources: tuple = ()
    receivers: tuple = ()


@dataclass
class HybridState:
    fdm: FdmState | None
    fem: FemState | None

    @classmethod
    def at_rest(cls, model: HybridModel) -> "HybridState":
        fdm = FdmState.zeros(model.fdm_ops.layout) if model.fdm_ops else None
        fem = FemState.zeros(model.system) if model.system else None
        return cls(fdm, fem)

    def copy(self) -> "HybridState":
        return HybridState(
            self.fdm.copy() if self.fdm is not None else None,
            self.fem.copy() if self.fem is not None else None,
        )


def validate_model(model: HybridModel) -> None:
    if model.mode not in MODES:
        raise ModelError(f"unknown mode {model.mode!r}, expected one of {MODES}")
    need_fem = model.mode in ("hybrid", "fem")
    need_fdm = model.mode in ("hybrid", "fdm")
    if need_fem != (model.system is not None):
        raise ModelError(f"mode {model.mode!r} and system={model.system!r} disagree")
    if need_fdm != (model.fdm_ops is not None):
        raise ModelError(f"mode {model.mode!r} needs a matching fdm_ops")
    if (model.mode == "hybrid") != (model.exchange is not None):
        raise ModelError(f"mode {model.mode!r} and the interface exchange disagree")

    if model.mode == "hybrid":
        _check_interface_alignment(model)
    elif model.mode == "fdm" and model.fdm_ops.has_interface:
        raise ModelError("a standalone deep region cannot couple through its top")

    for rec in model.receivers:
        if isinstance(rec, FdmReceiver):
            if model.fdm_ops is None:
                raise ModelError("a deep-region receiver needs fdm_ops")
        elif isinstance(rec, FemReceiver):
            if model.system is None:
                raise ModelError("a shallow-region receiver needs a system")
        else:
            raise ModelError(f"unknown receiver type {type(rec).__name__}")
    if model.fdm_sources and model.fdm_ops is None:
        raise ModelError("deep-region sources need fdm_ops")
    if model.fem_sources and model.system is None:
        raise ModelError("shallow-region sources need a system")


def _check_interface_alignment(model: HybridModel) -> None:
    """The two regions must describe the same interface quadrature."""
    layout = model.fdm_ops.layout
    exchange = model.exchange
    if not model.fdm_ops.has_interface:
        raise ModelError("the deep region was not built with an interface top")
    if exchange.n_elements != layout.nx:
        raise ModelError(
            f"{exchange.n_elements} interface elements vs {layout.nx} grid columns"
        )
    dx = layout.x_axis.dx
    if abs(exchange.dx - dx) > 1e-12 * dx:
        raise ModelError(f"interface spacing {exchange.dx} != grid spacing {dx}")
    coords = model.system.interface_coords
    expected_x = layout.origin[0] + quadrature_coords(exchange)
    if coords.shape[0] != expected_x.size:
        raise ModelError(
            f"{coords.shape[0]} shallow-region quadrature points vs "
            f"{expected_x.size} on the exchange"
        )
    tol = 1e-9 * dx
    if np.max(np.abs(coords[:, 0] - expected_x)) > tol:
        raise ModelError("interface quadrature points of the regions do not line up")
    if np.max(np.abs(coords[:, 1] - layout.interface_y)) > tol:
        raise ModelError("the shallow region does not sit on top of the deep region")
    if np.max(np.abs(model.system.interface_weights - exchange.w_q)) > 1e-12 * dx:
        raise ModelError("interface quadrature weights of the regions disagree")
    if not np.array_equal(model.fdm_ops.a_x_n, exchange.a_n) or not np.array_equal(
        model.fdm_ops.a_x_m, exchange.a_m
    ):
        raise ModelError("interface norm diagonals of the regions disagree")


def _velocity_kick(state: HybridState, model: HybridModel, t: float, dt: float, step: int):
    """Phases 1 and 2: both velocity families advance one full step on
    integer-level data only.  Returns the new half-level vectors plus the
    exchange ingredients, without touching the state."""
    xi_new = penalty = tractions = v_new = None
    if model.system is not None:
        rhs = -(model.system.stiffness @ state.fem.b)
        if model.exchange is not None:
            tractions = interface_tractions(state.fdm, model.fdm_ops)
            penalty = interface_penalty(
                fdm_to_fem(tractions, model.exchange), model.system
            )
            rhs -= penalty
        for source in model.fem_sources:
            source.add_force(t, rhs)
        xi_new = state.fem.xi + dt * model.system.apply_mass_inverse(rhs)
        if not np.all(np.isfinite(xi_new)):
            raise NonFiniteStateError(f"non-finite values in xi at step {step}")
    if model.fdm_ops is not None:
        dvx, dvy = velocity_rhs(state.fdm, model.fdm_ops, step_hint=step)
        v_new = (state.fdm.vx + dt * dvx, state.fdm.vy + dt * dvy)
    return xi_new, v_new, penalty, tractions


def _energy_sample(state, model, xi_new, v_new):
    """Six energies at the integer level the state currently holds.

    The primary kinetic entries pair the velocity halves on either side
    of the level; the naive total squares the older half instead, which
    oscillates at second order in dt and is kept for comparison only.
    """
    fem_kin = fem_pot = fdm_kin = fdm_pot = 0.0
    naive_kin = 0.0
    if model.system is not None:
        fem_kin, fem_pot = fem_energy(state.fem.b, state.fem.xi, xi_new, model.system)
        naive_kin += fem_energy(state.fem.b, state.fem.xi, state.fem.xi, model.system)[0]
    if model.fdm_ops is not None:
        prev = (state.fdm.vx, state.fdm.vy)
        stresses = (state.fdm.sxx, state.fdm.sxy, state.fdm.syy)
        fdm_kin, fdm_pot = fdm_energy(prev, v_new, stresses, model.fdm_ops)
        naive_kin += fdm_energy(prev, prev, stresses, model.fdm_ops)[0]
    total = fem_kin + fem_pot + fdm_kin + fdm_pot
    return (fem_kin, fem_pot, fdm_kin, fdm_pot, total, naive_kin + fem_pot + fdm_pot)


@dataclass
class StepRecord:
    energy: tuple | None = None
    audit: float | None = None


def leapfrog_step(
    state: HybridState,
    model: HybridModel,
    clock: SimClock,
    collect_energy: bool = False,
    collect_audit: bool = False,
) -> StepRecord:
    """Advance the state one step in place and tick the clock.

    With collect_audit, the record carries the summed interface power of
    the two regions, evaluated with the actually-exchanged vectors; the
    exchange is built so this cancels to round-off.
    """
    t, dt, step = clock.time, clock.dt, clock.step
    record = StepRecord()
    xi_new, v_new, penalty, tractions = _velocity_kick(state, model, t, dt, step)

    if collect_energy:
        record.energy = _energy_sample(state, model, xi_new, v_new)

    interface_velocity = None
    if model.exchange is not None:
        trace = interface_velocity_trace(xi_new, model.system)
        interface_velocity = fem_to_fdm(trace, model.exchange)
        if collect_audit:
            shallow_rate = -float(xi_new @ penalty)
            deep_rate = float(
                interface_velocity[0] @ (model.fdm_ops.a_x_n * tractions[0])
                + interface_velocity[1] @ (model.fdm_ops.a_x_m * tractions[1])
            )
            record.audit = shallow_rate + deep_rate

    if model.fdm_ops is not None:
        state.fdm.vx, state.fdm.vy = v_new
        dsxx, dsxy, dsyy = stress_rhs(
            state.fdm, model.fdm_ops, interface_velocity, step_hint=step
        )
        state.fdm.sxx += dt * dsxx
        state.fdm.sxy += dt * dsxy
        state.fdm.syy += dt * dsyy
        t_mid = t + 0.5 * dt
        for source in model.fdm_sources:
            bump = source.stress_increment(t_mid, dt)
            if bump != 0.0:
                state.fdm.sxx[source.flat_index] += bump
                state.fdm.syy[source.flat_index] += bump

    if model.system is not None:
        state.fem.xi = xi_new
        state.fem.b = state.fem.b + dt * xi_new

    clock.advance()
    return record


def sample_receivers(state: HybridState, model: HybridModel) -> np.ndarray:
    """Vertical velocity at every receiver, at the current half level."""
    out = np.empty(len(model.receivers))
    for i, rec in enumerate(model.receivers):
        if isinstance(rec, FdmReceiver):
            out[i] = rec.sample(state.fdm.vy)
        else:
            out[i] = rec.sample(state.fem.xi)
    return out


def time_reversed(state: HybridState, model: HybridModel, clock: SimClock) -> HybridState:
    """State that runs the trajectory backward from the current level.

    The stored velocities sit half a step behind the integer-level
    fields, so plain negation would reverse around the wrong level; the
    correct involution advances both velocity families half a pairing
    (one kick) and negates those.  Only meaningful once sources have
    switched off.
    """
    xi_new, v_new, _, _ = _velocity_kick(state, model, clock.time, clock.dt, clock.step)
    out = state.copy()
    if xi_new is not None:
        out.fem.xi = -xi_new
    if v_new is not None:
        out.fdm.vx = -v_new[0]
        out.fdm.vy = -v_new[1]
    return out


@dataclass
class RunOutputs:
    """Seismogram rows at half-level times, energy rows at integer-level
    times, the worst interface-power residual seen (when audited), and
    the final state."""

    times: np.ndarray
    seismogram: np.ndarray
    energy_times: np.ndarray
    energy: np.ndarray
    audit_max: float | None
    state: HybridState
    clock: SimClock


def run_model(
    model: HybridModel,
    clock: SimClock,
    energy_stride: int = 1,
    audit: bool = False,
    initial_state: HybridState | None = None,
) -> RunOutputs:
    """Run the model from rest (or from initial_state) for n_steps."""
    validate_model(model)
    if energy_stride < 1:
        raise ValueError(f"energy_stride must be at least 1, got {energy_stride}")
    if clock.step != 0:
        raise ValueError(f"the clock has already run to step {clock.step}")
    state = initial_state.copy() if initial_state is not None else HybridState.at_rest(model)
    seismogram = np.empty((clock.n_steps, len(model.receivers)))
    times = (np.arange(clock.n_steps) + 0.5) * clock.dt
    energy_times, energy_rows = [], []
    audit_max = 0.0 if audit else None
    try:
        while clock.step < clock.n_steps:
            level = clock.step
            record = leapfrog_step(
                state,
                model,
                clock,
                collect_energy=(level % energy_stride == 0),
                collect_audit=audit,
            )
            if record.energy is not None:
                energy_times.append(level * clock.dt)
                energy_rows.append(record.energy)
            if record.audit is not None:
                audit_max = max(audit_max, abs(record.audit))
            seismogram[level] = sample_receivers(state, model)
        if clock.n_steps % energy_stride == 0:
            xi_new, v_new, _, _ = _velocity_kick(
                state, model, clock.time, clock.dt, clock.step
            )
            energy_times.append(clock.time)
            energy_rows.append(_energy_sample(state, model, xi_new, v_new))
    except NonFiniteStateError as err:
        failure = UnstableRunError(clock.step, clock.time, str(err))
        failure.partial = RunOutputs(
            times=times[: clock.step],
            seismogram=seismogram[: clock.step],
            energy_times=np.asarray(energy_times),
            energy=np.asarray(energy_rows).reshape(-1, 6),
            audit_max=audit_max,
            state=state,
            clock=clock,
        )
        raise failure from err
    return RunOutputs(
        times=times,
        seismogram=seismogram,
        energy_times=np.asarray(energy_times),
        energy=np.asarray(energy_rows).reshape(-1, 6),
        audit_max=audit_max,
        state=state,
        clock=clock,
    )
