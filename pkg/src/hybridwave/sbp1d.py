"""1D staggered summation-by-parts building blocks.

Two grids live on an axis of ``n_cells`` cells with spacing ``dx``:

    N-grid: cell edges.  Bounded axes keep both endpoints (n_cells + 1
            points, endpoints on the boundaries); periodic axes store the
            n_cells unique points and wrap.
    M-grid: cell centers, staggered by dx/2 (n_cells points either way).

A staggered pair bundles the two derivative operators (N -> M and M -> N),
the diagonal norm (quadrature) matrices of both grids, and, for bounded
axes, the boundary selection/projection vectors:

    e_b, e_i: N-grid selection of the first/last point (the boundaries),
    p_b, p_i: M-grid extrapolation to the first/last boundary coordinate.

The defining identity ties everything together:

    periodic:  a_n @ d_m + (a_m @ d_n).T = 0
    bounded:   a_n @ d_m + (a_m @ d_n).T = -outer(e_b, p_b) + outer(e_i, p_i)

Interior rows of both derivative operators use the 4th-order staggered
stencil [1/24, -9/8, 9/8, -1/24] / dx.  Bounded closure rows are exact on
quadratics (hence second-order accurate); they are pinned, together with
the boundary norm entries, as the unique minimal-support solution of the
identity above combined with that exactness requirement.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INTERIOR_STENCIL = np.array([1.0 / 24.0, -9.0 / 8.0, 9.0 / 8.0, -1.0 / 24.0])

# Bounded closures for unit spacing (left side; right side is the
# antisymmetric mirror).  Row i of _M_TO_N_CLOSURE starts at M-point 0;
# row i of _N_TO_M_CLOSURE starts at N-point 0.
_M_TO_N_CLOSURE = (
    np.array([-2.0, 3.0, -1.0]),
    np.array([-1.0, 1.0]),
    INTERIOR_STENCIL.copy(),
    np.array([-1.0 / 71.0, 6.0 / 71.0, -83.0 / 71.0, 81.0 / 71.0, -3.0 / 71.0]),
)
_N_TO_M_CLOSURE = (
    np.array([-79.0 / 78.0, 27.0 / 26.0, -1.0 / 26.0, 1.0 / 78.0]),
    np.array([2.0 / 21.0, -9.0 / 7.0, 9.0 / 7.0, -2.0 / 21.0]),
    np.array([1.0 / 75.0, 0.0, -27.0 / 25.0, 83.0 / 75.0, -1.0 / 25.0]),
)
_N_NORM_CLOSURE = np.array([7.0 / 18.0, 9.0 / 8.0, 1.0, 71.0 / 72.0])
_M_NORM_CLOSURE = np.array([13.0 / 12.0, 7.0 / 8.0, 25.0 / 24.0])
PROJECTION_STENCIL = np.array([15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0])


class OperatorBuildError(ValueError):
    """Raised when an axis is too short for the requested stencils."""


@dataclass(frozen=True)
class GridAxis1D:
    """Coordinates of one staggered axis."""

    n_cells: int
    dx: float
    periodic: bool

    @property
    def n_coords(self) -> np.ndarray:
        n_pts = self.n_cells if self.periodic else self.n_cells + 1
        return np.arange(n_pts) * self.dx

    @property
    def m_coords(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def length(self) -> float:
        return self.n_cells * self.dx


@dataclass(frozen=True)
class StaggeredPair1D:
    """A matched pair of staggered derivative operators with their norms.

    d_n maps N-grid values to M-grid values; d_m maps M-grid values to
    N-grid values.  a_n / a_m hold the diagonal entries of the norm
    matrices (quadrature weights, units of length).  The boundary vectors
    are empty for periodic pairs.
    """

    kind: str  # "periodic" | "bounded"
    dx: float
    n_cells: int
    d_n: np.ndarray
    d_m: np.ndarray
    a_n: np.ndarray
    a_m: np.ndarray
    e_b: np.ndarray = field(default_factory=lambda: np.empty(0))
    e_i: np.ndarray = field(default_factory=lambda: np.empty(0))
    p_b: np.ndarray = field(default_factory=lambda: np.empty(0))
    p_i: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def axis(self) -> GridAxis1D:
        return GridAxis1D(self.n_cells, self.dx, self.kind == "periodic")


def periodic_staggered_pair(n_cells: int, dx: float) -> StaggeredPair1D:
    """Build the wrapped 4th-order pair on a periodic axis.

    Every row of both operators is the interior stencil with periodic
    index wrap; both norms are dx * identity.
    """
    if n_cells < 4:
        raise OperatorBuildError(
            f"periodic staggered stencil needs at least 4 cells, got {n_cells}"
        )
    # d_n row j: derivative at M-point j from N-points j-1 .. j+2
    d_n = np.zeros((n_cells, n_cells))
    # d_m row i: derivative at N-point i from M-points i-2 .. i+1
    d_m = np.zeros((n_cells, n_cells))
    cols = np.arange(n_cells)
    for k, c in enumerate(INTERIOR_STENCIL):
        d_n[cols, (cols - 1 + k) % n_cells] += c / dx
        d_m[cols, (cols - 2 + k) % n_cells] += c / dx
    a = np.full(n_cells, dx)
    return StaggeredPair1D(
        kind="periodic", dx=dx, n_cells=n_cells,
        d_n=d_n, d_m=d_m, a_n=a, a_m=a.copy(),
    )


def bounded_staggered_pair(n_cells: int, dx: float) -> StaggeredPair1D:
    """Build the bounded pair with second-order boundary closures.

    The N-grid has n_cells + 1 points with endpoints on the boundaries.
    Four rows of d_m, three rows of d_n, four entries of a_n and three of
    a_m are modified at each end; everything else is the interior stencil.
    """
    if n_cells < 8:
        raise OperatorBuildError(
            f"bounded closures overlap below 8 cells, got {n_cells}"
        )
    n_n = n_cells + 1

    d_m = np.zeros((n_n, n_cells))
    for i, row in enumerate(_M_TO_N_CLOSURE):
        d_m[i, : row.size] = row
    for i in range(4, n_n - 4):
        d_m[i, i - 2 : i + 2] = INTERIOR_STENCIL
    for i, row in enumerate(_M_TO_N_CLOSURE):
        d_m[n_n - 1 - i, n_cells - row.size :] = -row[::-1]
    d_m /= dx

    d_n = np.zeros((n_cells, n_n))
    for i, row in enumerate(_N_TO_M_CLOSURE):
        d_n[i, : row.size] = row
    for i in range(3, n_cells - 3):
        d_n[i, i - 1 : i + 3] = INTERIOR_STENCIL
    for i, row in enumerate(_N_TO_M_CLOSURE):
        d_n[n_cells - 1 - i, n_n - row.size :] = -row[::-1]
    d_n /= dx

    a_n = np.full(n_n, dx)
    a_n[:4] = _N_NORM_CLOSURE * dx
    a_n[-4:] = _N_NORM_CLOSURE[::-1] * dx
    a_m = np.full(n_cells, dx)
    a_m[:3] = _M_NORM_CLOSURE * dx
    a_m[-3:] = _M_NORM_CLOSURE[::-1] * dx

    e_b = np.zeros(n_n)
    e_b[0] = 1.0
    e_i = np.zeros(n_n)
    e_i[-1] = 1.0
    p_b = np.zeros(n_cells)
    p_b[:3] = PROJECTION_STENCIL
    p_i = np.zeros(n_cells)
    p_i[-3:] = PROJECTION_STENCIL[::-1]

    return StaggeredPair1D(
        kind="bounded", dx=dx, n_cells=n_cells,
        d_n=d_n, d_m=d_m, a_n=a_n, a_m=a_m,
        e_b=e_b, e_i=e_i, p_b=p_b, p_i=p_i,
    )


def sbp_identity_residual(pair: StaggeredPair1D) -> float:
    """Max-norm residual of the pair's defining identity.

    Zero (to round-off) for a correctly built pair of either kind; a
    perturbed stencil coefficient shows up at first order.
    """
    lhs = pair.a_n[:, None] * pair.d_m + (pair.a_m[:, None] * pair.d_n).T
    if pair.kind == "bounded":
        lhs = lhs + np.outer(pair.e_b, pair.p_b) - np.outer(pair.e_i, pair.p_i)
    return float(np.abs(lhs).max())
