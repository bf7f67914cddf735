"""Staggered-grid velocity-stress discretization of the deep region.

Fields live on four staggered subgrids of a rectangle: v_x on (N_x, M_y),
v_y on (M_x, N_y), sigma_xy on (N_x, N_y), and sigma_xx/sigma_yy on
(M_x, M_y).  The x-axis is periodic, the y-axis bounded; y = 0 is a free
surface and the top N-row is either the coupling interface (default), a
second free surface, or absent when y is made periodic for convergence
studies.  All 2D operators are tensor products of the 1D staggered pairs,
so the summation-by-parts structure survives in 2D and the semi-discrete
energy moves only through the boundary terms.

Field vectors are C-order flattenings of (nx, ny_points) arrays: y varies
fastest within an x-column, columns run left to right.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .medium import IsotropicMedium, SubgridCoefficients, sample_on_subgrids
from .sbp1d import (
    GridAxis1D,
    OperatorBuildError,
    bounded_staggered_pair,
    periodic_staggered_pair,
)

SUBGRID_NAMES = ("vx", "vy", "sxx", "sxy", "syy")


class NonFiniteStateError(FloatingPointError):
    """A field vector contains NaN or Inf."""


@dataclass(frozen=True)
class StaggeredLayout2D:
    """Geometry of the staggered subgrids: a periodic x-axis over a bounded
    (or, for testing, periodic) y-axis, anchored at ``origin``."""

    x_axis: GridAxis1D
    y_axis: GridAxis1D
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.x_axis.periodic:
            raise OperatorBuildError("the x axis must be periodic")

    @property
    def nx(self) -> int:
        return self.x_axis.n_cells

    @property
    def ny_n(self) -> int:
        """Points on the y N-grid (one per cell when periodic, cells+1 otherwise)."""
        ny = self.y_axis.n_cells
        return ny if self.y_axis.periodic else ny + 1

    @property
    def interface_y(self) -> float:
        return self.origin[1] + self.y_axis.length

    def subgrid_shape(self, name: str) -> tuple[int, int]:
        my = self.y_axis.n_cells
        return {
            "vx": (self.nx, my),
            "vy": (self.nx, self.ny_n),
            "sxx": (self.nx, my),
            "sxy": (self.nx, self.ny_n),
            "syy": (self.nx, my),
        }[name]

    def subgrid_coords(self, name: str):
        """Broadcastable (x, y) coordinate arrays for one subgrid."""
        x0, y0 = self.origin
        dx, dy = self.x_axis.dx, self.y_axis.dx
        x_n = x0 + np.arange(self.nx) * dx
        x_m = x0 + (np.arange(self.nx) + 0.5) * dx
        y_n = y0 + np.arange(self.ny_n) * dy
        y_m = y0 + (np.arange(self.y_axis.n_cells) + 0.5) * dy
        x, y = {
            "vx": (x_n, y_m),
            "vy": (x_m, y_n),
            "sxx": (x_m, y_m),
            "sxy": (x_n, y_n),
            "syy": (x_m, y_m),
        }[name]
        return x[:, None], y[None, :]

    def n_points(self, name: str) -> int:
        shape = self.subgrid_shape(name)
        return shape[0] * shape[1]


@dataclass
class FdmState:
    """The five field vectors, each flattened per the layout convention."""

    vx: np.ndarray
    vy: np.ndarray
    sxx: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray

    @classmethod
    def zeros(cls, layout: StaggeredLayout2D) -> "FdmState":
        return cls(*(np.zeros(layout.n_points(name)) for name in SUBGRID_NAMES))

    def copy(self) -> "FdmState":
        return FdmState(*(getattr(self, name).copy() for name in SUBGRID_NAMES))

    def scale(self) -> float:
        return max(
            float(np.abs(getattr(self, name)).max()) if getattr(self, name).size else 0.0
            for name in SUBGRID_NAMES
        )


def _require_finite(step_hint, **fields):
    for name, values in fields.items():
        if not np.all(np.isfinite(values)):
            where = f" at step {step_hint}" if step_hint is not None else ""
            raise NonFiniteStateError(f"non-finite values in {name}{where}")


def _rank_one(col: np.ndarray, row: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(np.outer(col, row))


@dataclass(frozen=True)
class FdmOperators:
    """Tensor-product operators, norms, coefficients, boundary machinery.

    Difference operators are named by the field they consume; free-surface
    penalty terms are folded into the velocity-equation y-operators and the
    interface projection into the stress-equation y-operators, so the RHS
    routines are plain matrix-vector products plus the interface injection.
    """

    layout: StaggeredLayout2D
    top_boundary: str
    dx_sxx: sp.csr_matrix
    dy_sxy: sp.csr_matrix
    dx_sxy: sp.csr_matrix
    dy_syy: sp.csr_matrix
    dx_vx: sp.csr_matrix
    dy_vy: sp.csr_matrix
    dx_vy: sp.csr_matrix
    dy_vx: sp.csr_matrix
    dy_vy_plain: sp.csr_matrix
    dy_vx_plain: sp.csr_matrix
    a_vx: np.ndarray
    a_vy: np.ndarray
    a_sn: np.ndarray
    a_sxy: np.ndarray
    a_x_n: np.ndarray
    a_x_m: np.ndarray
    coeffs: SubgridCoefficients
    x_pair: object
    y_pair: object
    inj_vy_column: np.ndarray | None
    inj_vx_scale: float | None

    @property
    def has_interface(self) -> bool:
        return self.top_boundary == "interface"


def build_fdm_operators(
    layout: StaggeredLayout2D,
    medium: IsotropicMedium,
    top_boundary: str = "interface",
) -> FdmOperators:
    """Assemble the 2D operator set for one region.

    top_boundary is "interface" (couple to the region above through
    modified stress derivatives), "free" (a second traction-free surface),
    or "periodic" (requires a periodic y-axis; no boundaries at all).
    """
    if layout.y_axis.periodic != (top_boundary == "periodic"):
        raise OperatorBuildError(
            f"top_boundary={top_boundary!r} does not match y-axis "
            f"periodic={layout.y_axis.periodic}"
        )
    if top_boundary not in ("interface", "free", "periodic"):
        raise OperatorBuildError(f"unknown top_boundary {top_boundary!r}")

    nx = layout.nx
    x_pair = periodic_staggered_pair(nx, layout.x_axis.dx)
    if layout.y_axis.periodic:
        y_pair = periodic_staggered_pair(layout.y_axis.n_cells, layout.y_axis.dx)
    else:
        y_pair = bounded_staggered_pair(layout.y_axis.n_cells, layout.y_axis.dx)

    identity_x = sp.identity(nx, format="csr")
    identity_ym = sp.identity(layout.y_axis.n_cells, format="csr")
    identity_yn = sp.identity(layout.ny_n, format="csr")
    d_n_x = sp.csr_matrix(x_pair.d_n)
    d_m_x = sp.csr_matrix(x_pair.d_m)
    d_n_y = sp.csr_matrix(y_pair.d_n)
    d_m_y = sp.csr_matrix(y_pair.d_m)

    dy_sxy = sp.kron(identity_x, d_n_y, format="csr")
    dy_vy_plain = dy_sxy
    dy_syy = sp.kron(identity_x, d_m_y, format="csr")
    dy_vx_plain = dy_syy
    dy_vx = dy_vx_plain
    dy_vy = dy_vy_plain
    inj_vy_column = None
    inj_vx_scale = None

    if not layout.y_axis.periodic:
        sat_bottom_vx = _rank_one(y_pair.p_b / y_pair.a_m, y_pair.e_b)
        sat_bottom_vy = _rank_one(y_pair.e_b / y_pair.a_n, y_pair.p_b)
        dy_sxy = dy_sxy + sp.kron(identity_x, sat_bottom_vx, format="csr")
        dy_syy = dy_syy + sp.kron(identity_x, sat_bottom_vy, format="csr")
        if top_boundary == "free":
            sat_top_vx = _rank_one(y_pair.p_i / y_pair.a_m, y_pair.e_i)
            sat_top_vy = _rank_one(y_pair.e_i / y_pair.a_n, y_pair.p_i)
            dy_sxy = dy_sxy - sp.kron(identity_x, sat_top_vx, format="csr")
            dy_syy = dy_syy - sp.kron(identity_x, sat_top_vy, format="csr")
        else:
            mod_vx = _rank_one(y_pair.e_i / y_pair.a_n, y_pair.p_i)
            mod_vy = _rank_one(y_pair.p_i / y_pair.a_m, y_pair.e_i)
            dy_vx = dy_vx_plain - sp.kron(identity_x, mod_vx, format="csr")
            dy_vy = dy_vy_plain - sp.kron(identity_x, mod_vy, format="csr")
            inj_vy_column = y_pair.p_i / y_pair.a_m
            inj_vx_scale = float(1.0 / y_pair.a_n[-1])

    return FdmOperators(
        layout=layout,
        top_boundary=top_boundary,
        dx_sxx=sp.kron(d_m_x, identity_ym, format="csr"),
        dy_sxy=dy_sxy.tocsr(),
        dx_sxy=sp.kron(d_n_x, identity_yn, format="csr"),
        dy_syy=dy_syy.tocsr(),
        dx_vx=sp.kron(d_n_x, identity_ym, format="csr"),
        dy_vy=dy_vy.tocsr(),
        dx_vy=sp.kron(d_m_x, identity_yn, format="csr"),
        dy_vx=dy_vx.tocsr(),
        dy_vy_plain=dy_vy_plain,
        dy_vx_plain=dy_vx_plain,
        a_vx=np.outer(x_pair.a_n, y_pair.a_m).ravel(),
        a_vy=np.outer(x_pair.a_m, y_pair.a_n).ravel(),
        a_sn=np.outer(x_pair.a_m, y_pair.a_m).ravel(),
        a_sxy=np.outer(x_pair.a_n, y_pair.a_n).ravel(),
        a_x_n=x_pair.a_n,
        a_x_m=x_pair.a_m,
        coeffs=sample_on_subgrids(medium, layout),
        x_pair=x_pair,
        y_pair=y_pair,
        inj_vy_column=inj_vy_column,
        inj_vx_scale=inj_vx_scale,
    )


def velocity_rhs(state: FdmState, ops: FdmOperators, step_hint=None):
    """Momentum-balance rates (dvx/dt, dvy/dt), free-surface terms included."""
    _require_finite(step_hint, sxx=state.sxx, sxy=state.sxy, syy=state.syy)
    dvx = (ops.dx_sxx @ state.sxx + ops.dy_sxy @ state.sxy) / ops.coeffs.rho_vx
    dvy = (ops.dx_sxy @ state.sxy + ops.dy_syy @ state.syy) / ops.coeffs.rho_vy
    return dvx, dvy


def stress_rhs(state: FdmState, ops: FdmOperators, interface_velocity=None, step_hint=None):
    """Constitutive rates (dsxx/dt, dsxy/dt, dsyy/dt).

    With a coupling interface, interface_velocity = (vx at the interface
    N-points, vy at the interface M-points) supplies the trace of the region
    above; the modified derivative penalizes this region's own trace toward
    it inside the topmost closure rows.  Without an interface the argument
    must be omitted.
    """
    _require_finite(step_hint, vx=state.vx, vy=state.vy)
    nx = ops.layout.nx
    exx = ops.dx_vx @ state.vx
    eyy = ops.dy_vy @ state.vy
    shear = ops.dx_vy @ state.vy + ops.dy_vx @ state.vx
    if ops.has_interface:
        if interface_velocity is None:
            raise ValueError("stress_rhs needs interface_velocity when coupled")
        vx_e, vy_e = interface_velocity
        if len(vx_e) != nx or len(vy_e) != nx:
            raise ValueError(
                f"interface velocity lengths {len(vx_e)}, {len(vy_e)} != nx={nx}"
            )
        cols = np.flatnonzero(ops.inj_vy_column)
        eyy_2d = eyy.reshape(ops.layout.subgrid_shape("sxx"))
        eyy_2d[:, cols] += np.outer(vy_e, ops.inj_vy_column[cols])
        shear_2d = shear.reshape(ops.layout.subgrid_shape("sxy"))
        shear_2d[:, -1] += np.asarray(vx_e) * ops.inj_vx_scale
    elif interface_velocity is not None:
        raise ValueError(f"no interface with top_boundary={ops.top_boundary!r}")
    lam = ops.coeffs.lam_normal
    lam_2mu = lam + 2 * ops.coeffs.mu_normal
    dsxx = lam_2mu * exx + lam * eyy
    dsyy = lam * exx + lam_2mu * eyy
    dsxy = ops.coeffs.mu_shear * shear
    return dsxx, dsxy, dsyy


def interface_tractions(state: FdmState, ops: FdmOperators):
    """Traction trace on the top boundary: sigma_xy at the N-points (row
    selection) and sigma_yy at the M-points (projection)."""
    if ops.layout.y_axis.periodic:
        raise ValueError("a periodic y-axis has no interface")
    sxy_top = state.sxy.reshape(ops.layout.subgrid_shape("sxy"))[:, -1].copy()
    syy_top = state.syy.reshape(ops.layout.subgrid_shape("syy")) @ ops.y_pair.p_i
    return sxy_top, syy_top


def fdm_energy(v_half_minus, v_half_plus, stresses, ops: FdmOperators):
    """Discrete (kinetic, potential) energy.

    Kinetic energy pairs the two half-step velocities around an integer
    step: for leapfrog this staggered product is the exactly conserved
    quadratic form, while the naive square oscillates at second order in
    the step size.
    """
    vxm, vym = v_half_minus
    vxp, vyp = v_half_plus
    kinetic = 0.5 * (
        vxm @ (ops.a_vx * ops.coeffs.rho_vx * vxp)
        + vym @ (ops.a_vy * ops.coeffs.rho_vy * vyp)
    )
    sxx, sxy, syy = stresses
    lam = ops.coeffs.lam_normal
    mu = ops.coeffs.mu_normal
    denom = 4 * mu * (lam + mu)
    s_nn = (lam + 2 * mu) / denom
    s_nt = lam / denom
    s_shear = 1.0 / (2 * ops.coeffs.mu_shear)
    potential = float(
        ops.a_sn @ (0.5 * s_nn * (sxx**2 + syy**2) - s_nt * sxx * syy)
        + ops.a_sxy @ (s_shear * sxy**2)
    )
    return float(kinetic), potential


def fdm_energy_rate(state: FdmState, rates, ops: FdmOperators) -> float:
    """Chain-rule energy rate of the semi-discrete flow, for verification."""
    dvx, dvy, dsxx, dsxy, dsyy = rates
    kinetic_rate = state.vx @ (ops.a_vx * ops.coeffs.rho_vx * dvx) + state.vy @ (
        ops.a_vy * ops.coeffs.rho_vy * dvy
    )
    lam = ops.coeffs.lam_normal
    mu = ops.coeffs.mu_normal
    denom = 4 * mu * (lam + mu)
    s_nn = (lam + 2 * mu) / denom
    s_nt = lam / denom
    s_shear = 1.0 / (2 * ops.coeffs.mu_shear)
    potential_rate = (
        ops.a_sn @ ((s_nn * state.sxx - s_nt * state.syy) * dsxx)
        + ops.a_sn @ ((s_nn * state.syy - s_nt * state.sxx) * dsyy)
        + ops.a_sxy @ (2 * s_shear * state.sxy * dsxy)
    )
    return float(kinetic_rate + potential_rate)


def fdm_interface_energy_rate(state: FdmState, ops: FdmOperators, interface_velocity) -> float:
    """Power flowing into this region through the interface."""
    vx_e, vy_e = interface_velocity
    sxy_top, syy_top = interface_tractions(state, ops)
    return float(vx_e @ (ops.a_x_n * sxy_top) + vy_e @ (ops.a_x_m * syy_top))


SNAPSHOT_MAGIC = "staggered-snapshot 1"


def write_snapshot(path, state: FdmState, layout: StaggeredLayout2D, time: float) -> None:
    """Dump all five field vectors with a text header and float64 payload."""
    header = [SNAPSHOT_MAGIC, f"time {time!r}"]
    for name in SUBGRID_NAMES:
        shape = layout.subgrid_shape(name)
        header.append(f"{name} {shape[0]} {shape[1]}")
    header.append("end")
    payload = b"".join(
        np.ascontiguousarray(getattr(state, name), dtype="<f8").tobytes()
        for name in SUBGRID_NAMES
    )
    Path(path).write_bytes("\n".join(header).encode() + b"\n" + payload)


def read_snapshot(path):
    """Inverse of write_snapshot; returns (fields dict of 2D arrays, time)."""
    raw = Path(path).read_bytes()
    end = raw.index(b"\nend\n")
    lines = raw[:end].decode().splitlines()
    if lines[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    time = float(lines[1].split()[1])
    fields = {}
    offset = end + len(b"\nend\n")
    for line in lines[2:]:
        name, n0, n1 = line.split()
        count = int(n0) * int(n1)
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        fields[name] = data.reshape(int(n0), int(n1)).copy()
        offset += count * 8
    return fields, time
