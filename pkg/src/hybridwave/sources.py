"""Ricker wavelet source, per-region injection, and receiver placement.

The source is explosive: both normal stresses receive the same temporal
profile.  In the finite-difference region that is a point increment on
the normal-stress subgrid; in the finite-element region the equivalent
displacement-form load is the basis-gradient pattern scaled by the
running integral of the wavelet.  Both taper to zero and are cut off
outside the active window [0, 2*delay).
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .fdm import StaggeredLayout2D
from .fem import FemSystem, PointProbe, point_probe


class PlacementError(ValueError):
    """Source or receiver location falls outside the handled region."""


def ricker(t, frequency: float, delay: float):
    """(1 - 2 pi^2 f^2 s^2) exp(-pi^2 f^2 s^2) with s = t - delay."""
    s = np.asarray(t, dtype=float) - delay
    arg = (np.pi * frequency * s) ** 2
    return (1 - 2 * arg) * np.exp(-arg)


def ricker_integral(t, frequency: float, delay: float):
    """Integral of the wavelet from 0 to t; exact antiderivative."""
    s = np.asarray(t, dtype=float) - delay

    def primitive(u):
        return u * np.exp(-((np.pi * frequency * u) ** 2))

    return primitive(s) - primitive(-delay)


@dataclass(frozen=True)
class RickerSource:
    """Explosive point source with central frequency in Hz and delay in s."""

    frequency: float
    delay: float
    amplitude: float
    location: tuple

    def __post_init__(self):
        if self.frequency <= 0:
            raise ValueError(f"frequency must be positive, got {self.frequency}")
        if self.delay <= 0:
            raise ValueError(f"delay must be positive, got {self.delay}")
        onset = abs(float(ricker(0.0, self.frequency, self.delay)))
        if onset > 1e-4:
            warnings.warn(
                f"wavelet starts at {onset:.2e} of its peak; increase the "
                "delay or frequency so the switch-on is negligible",
                stacklevel=2,
            )

    @property
    def cutoff_time(self) -> float:
        return 2 * self.delay

    def wavelet(self, t: float) -> float:
        """Source amplitude at time t, zero outside the active window."""
        if t >= self.cutoff_time:
            return 0.0
        return float(ricker(t, self.frequency, self.delay))

    def wavelet_integral(self, t: float) -> float:
        """Running integral, hard-zeroed once the window closes.

        The residual integral at the cutoff is of the order of the
        switch-on amplitude, so dropping it keeps the post-source
        dynamics exactly conservative at a negligible cost.
        """
        if t >= self.cutoff_time:
            return 0.0
        return float(ricker_integral(t, self.frequency, self.delay))


def _nearest_index(value: float, first: float, spacing: float, count: int) -> int:
    idx = int(round((value - first) / spacing))
    return min(max(idx, 0), count - 1)


def _require_inside(location, x0, width, y_lo, y_hi, what: str):
    x, y = location
    if not (x0 <= x <= x0 + width) or not (y_lo <= y <= y_hi):
        raise PlacementError(
            f"{what} at ({x}, {y}) is outside the region "
            f"[{x0}, {x0 + width}] x [{y_lo}, {y_hi}]"
        )


@dataclass(frozen=True)
class FdmSource:
    """Point injection on the normal-stress subgrid."""

    source: RickerSource
    flat_index: int
    inv_cell_area: float

    def stress_increment(self, t: float, dt: float) -> float:
        """Additive contribution to both normal stresses over one step."""
        return self.source.amplitude * self.source.wavelet(t) * dt * self.inv_cell_area


def place_fdm_source(source: RickerSource, layout: StaggeredLayout2D) -> FdmSource:
    x0, y0 = layout.origin
    dx = layout.x_axis.dx
    _require_inside(
        source.location, x0, layout.x_axis.length, y0, layout.interface_y, "source"
    )
    x, y = source.location
    nx, my = layout.subgrid_shape("sxx")
    dy = layout.y_axis.dx
    ix = _nearest_index(x, x0 + 0.5 * dx, dx, nx)
    iy = _nearest_index(y, y0 + 0.5 * dy, dy, my)
    return FdmSource(source, ix * my + iy, 1.0 / (dx * dy))


@dataclass(frozen=True)
class FemSource:
    """Gradient-trace load pattern for the displacement-form region."""

    source: RickerSource
    nodes: np.ndarray
    pattern_x: np.ndarray
    pattern_y: np.ndarray
    n_nodes: int

    def add_force(self, t: float, rhs: np.ndarray) -> None:
        """Accumulate the load at time t into a (2 n_nodes,) vector."""
        strength = self.source.wavelet_integral(t)
        if strength == 0.0:
            return
        rhs[self.nodes] += strength * self.pattern_x
        rhs[self.n_nodes + self.nodes] += strength * self.pattern_y


def place_fem_source(source: RickerSource, system: FemSystem) -> FemSource:
    try:
        probe = point_probe(
            system.mesh, system.basis, source.location, system.numbering
        )
    except ValueError as err:
        raise PlacementError(f"source: {err}") from err
    return FemSource(
        source=source,
        nodes=probe.nodes,
        pattern_x=-source.amplitude * probe.gradients[:, 0],
        pattern_y=-source.amplitude * probe.gradients[:, 1],
        n_nodes=system.n_nodes,
    )


@dataclass(frozen=True)
class Receiver:
    """Vertical-velocity recording point."""

    location: tuple


@dataclass(frozen=True)
class FdmReceiver:
    receiver: Receiver
    flat_index: int

    def sample(self, vy: np.ndarray) -> float:
        return float(vy[self.flat_index])


def place_fdm_receiver(receiver: Receiver, layout: StaggeredLayout2D) -> FdmReceiver:
    x0, y0 = layout.origin
    _require_inside(
        receiver.location, x0, layout.x_axis.length, y0, layout.interface_y, "receiver"
    )
    x, y = receiver.location
    nx, ny = layout.subgrid_shape("vy")
    ix = _nearest_index(x, x0 + 0.5 * layout.x_axis.dx, layout.x_axis.dx, nx)
    iy = _nearest_index(y, y0, layout.y_axis.dx, ny)
    return FdmReceiver(receiver, ix * ny + iy)


@dataclass(frozen=True)
class FemReceiver:
    receiver: Receiver
    probe: PointProbe
    n_nodes: int

    def sample(self, xi: np.ndarray) -> float:
        return self.probe.evaluate(xi[self.n_nodes :])


def place_fem_receiver(receiver: Receiver, system: FemSystem) -> FemReceiver:
    try:
        probe = point_probe(
            system.mesh, system.basis, receiver.location, system.numbering
        )
    except ValueError as err:
        raise PlacementError(f"receiver: {err}") from err
    return FemReceiver(receiver, probe, system.n_nodes)
