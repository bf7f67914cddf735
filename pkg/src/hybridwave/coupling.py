"""Interface exchange operators between the two regions.

The horizontal interface carries three families of points per element of
width dx: the integer grid (N), the half-offset grid (M), and a set of
quadrature points (Q, three per element).  Primal operators interpolate
N- or M-grid values to Q; their energy-compatible duals map Q back.  The
duals are derived from the primal operators through the weighted-transpose
relation

    w_q . t_dn_eq = (t_eq_dn)^T . a_n        (and likewise for the M pair)

which is exactly what makes the discrete interface power exchanged by the
two regions cancel.  The x-axis is periodic, so stencils wrap at the ends.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sbp1d import OperatorBuildError

_SQRT15 = np.sqrt(15.0)

# symmetric 4-point interpolation to the center of the window
_MID4 = (-1 / 16, 9 / 16, 9 / 16, -1 / 16)


class SingularNormError(ValueError):
    """A diagonal norm or weight matrix has a zero entry."""


@dataclass(frozen=True)
class InterfaceOperators:
    """Primal interpolants, their duals, and the interface quadrature."""

    t_dn_eq: sp.csr_matrix
    t_dm_eq: sp.csr_matrix
    t_eq_dn: sp.csr_matrix
    t_eq_dm: sp.csr_matrix
    w_q: np.ndarray
    a_n: np.ndarray
    a_m: np.ndarray
    n_elements: int
    dx: float
    family: str


def _sparse_from_rows(rows, n_cols):
    """Assemble a CSR matrix from (row, wrapped column, value) triples."""
    data, ri, ci = [], [], []
    for r, (cols, vals) in enumerate(rows):
        for c, v in zip(cols, vals):
            ri.append(r)
            ci.append(c % n_cols)
            data.append(v)
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n_cols))


def gauss3_interpolants(n_elements: int, dx: float):
    """Three-point Gauss-Legendre quadrature per element.

    Points sit at the element center and at center +- (sqrt(15)/10)*dx,
    with weights dx*{5/18, 8/18, 5/18}.  Off-center rows are exact through
    quadratic polynomials; the center row through cubics.
    """
    if n_elements < 4:
        raise OperatorBuildError("need at least 4 interface elements")
    outer_n = (-1 / 20, 3 / 5 + _SQRT15 / 10, 9 / 20 - _SQRT15 / 10)
    outer_m = (3 / 40 + _SQRT15 / 20, 17 / 20, 3 / 40 - _SQRT15 / 20)
    rows_n, rows_m = [], []
    for k in range(n_elements):
        rows_n.append(((k - 1, k, k + 1), outer_n))
        rows_n.append(((k - 1, k, k + 1, k + 2), _MID4))
        rows_n.append(((k, k + 1, k + 2), outer_n[::-1]))
        rows_m.append(((k - 1, k, k + 1), outer_m))
        rows_m.append(((k,), (1.0,)))
        rows_m.append(((k - 1, k, k + 1), outer_m[::-1]))
    t_dn_eq = _sparse_from_rows(rows_n, n_elements)
    t_dm_eq = _sparse_from_rows(rows_m, n_elements)
    w_q = dx * np.tile([5 / 18, 8 / 18, 5 / 18], n_elements)
    return t_dn_eq, t_dm_eq, w_q


def gll3_interpolants(n_elements: int, dx: float):
    """Three-point Gauss-Lobatto quadrature per element.

    Points sit at both element endpoints and the midpoint, with weights
    dx*{1/6, 2/3, 1/6}.  Shared endpoints are listed once per adjacent
    element (duplicated rows, each carrying its own weight).  Rows select
    the coincident grid point where one exists and use the symmetric
    4-point stencil where the target falls mid-window.
    """
    if n_elements < 4:
        raise OperatorBuildError("need at least 4 interface elements")
    rows_n, rows_m = [], []
    for k in range(n_elements):
        rows_n.append(((k,), (1.0,)))
        rows_n.append(((k - 1, k, k + 1, k + 2), _MID4))
        rows_n.append(((k + 1,), (1.0,)))
        rows_m.append(((k - 2, k - 1, k, k + 1), _MID4))
        rows_m.append(((k,), (1.0,)))
        rows_m.append(((k - 1, k, k + 1, k + 2), _MID4))
    t_dn_eq = _sparse_from_rows(rows_n, n_elements)
    t_dm_eq = _sparse_from_rows(rows_m, n_elements)
    w_q = dx * np.tile([1 / 6, 2 / 3, 1 / 6], n_elements)
    return t_dn_eq, t_dm_eq, w_q


def derive_duals(t_dn_eq, t_dm_eq, w_q, a_n, a_m):
    """Build the Q->grid maps that balance the interface power exchange."""
    for name, diag in (("w_q", w_q), ("a_n", a_n), ("a_m", a_m)):
        if np.any(diag == 0):
            raise SingularNormError(f"{name} has a zero diagonal entry")
    t_eq_dn = sp.diags(1.0 / a_n) @ t_dn_eq.T @ sp.diags(w_q)
    t_eq_dm = sp.diags(1.0 / a_m) @ t_dm_eq.T @ sp.diags(w_q)
    return t_eq_dn.tocsr(), t_eq_dm.tocsr()


def build_interface_operators(n_elements: int, dx: float, family: str) -> InterfaceOperators:
    """Construct the full operator set for one quadrature family."""
    if family == "gauss3":
        t_dn_eq, t_dm_eq, w_q = gauss3_interpolants(n_elements, dx)
    elif family == "gll3":
        t_dn_eq, t_dm_eq, w_q = gll3_interpolants(n_elements, dx)
    else:
        raise OperatorBuildError(f"unknown quadrature family {family!r}")
    a_n = np.full(n_elements, dx)
    a_m = np.full(n_elements, dx)
    t_eq_dn, t_eq_dm = derive_duals(t_dn_eq, t_dm_eq, w_q, a_n, a_m)
    return InterfaceOperators(
        t_dn_eq=t_dn_eq, t_dm_eq=t_dm_eq, t_eq_dn=t_eq_dn, t_eq_dm=t_eq_dm,
        w_q=w_q, a_n=a_n, a_m=a_m,
        n_elements=n_elements, dx=dx, family=family,
    )


def quadrature_coords(ops: InterfaceOperators) -> np.ndarray:
    """Interface x-coordinates of the quadrature points, element by element."""
    k = np.arange(ops.n_elements)[:, None]
    if ops.family == "gauss3":
        offsets = np.array([0.5 - _SQRT15 / 10, 0.5, 0.5 + _SQRT15 / 10])
    else:
        offsets = np.array([0.0, 0.5, 1.0])
    return ((k + offsets) * ops.dx).ravel()


def fdm_to_fem(tractions, ops: InterfaceOperators):
    """Map interface tractions (sxy on N, syy on M) to the quadrature points."""
    sxy_at_n, syy_at_m = tractions
    if len(sxy_at_n) != ops.n_elements or len(syy_at_m) != ops.n_elements:
        raise ValueError(
            f"traction lengths {len(sxy_at_n)}, {len(syy_at_m)} do not match "
            f"{ops.n_elements} interface elements"
        )
    return ops.t_dn_eq @ sxy_at_n, ops.t_dm_eq @ syy_at_m


def fem_to_fdm(velocities, ops: InterfaceOperators):
    """Map quadrature-point velocities (vx, vy) to the N and M grids.

    The mapping must go through the derived duals: only then does the
    interface power computed by each region cancel identically.
    """
    vx_at_q, vy_at_q = velocities
    nq = 3 * ops.n_elements
    if len(vx_at_q) != nq or len(vy_at_q) != nq:
        raise ValueError(
            f"velocity lengths {len(vx_at_q)}, {len(vy_at_q)} do not match "
            f"{nq} quadrature points"
        )
    return ops.t_eq_dn @ vx_at_q, ops.t_eq_dm @ vy_at_q


def compatibility_residual(ops: InterfaceOperators) -> float:
    """Max-norm residual of the weighted-transpose relations."""
    res_n = sp.diags(ops.w_q) @ ops.t_dn_eq - (sp.diags(ops.a_n) @ ops.t_eq_dn).T
    res_m = sp.diags(ops.w_q) @ ops.t_dm_eq - (sp.diags(ops.a_m) @ ops.t_eq_dm).T
    out = 0.0
    for res in (res_n, res_m):
        data = res.tocoo().data
        if data.size:
            out = max(out, float(np.abs(data).max()))
    return out


def describe(ops: InterfaceOperators) -> str:
    """Short text dump for debugging."""
    return (
        f"InterfaceOperators(family={ops.family}, n_elements={ops.n_elements}, "
        f"dx={ops.dx:g}, nq={3 * ops.n_elements}, "
        f"compat_residual={compatibility_residual(ops):.3e})"
    )
