"""Quadratic quadrilateral finite elements for the shallow region.

Displacement lives in a 9-node tensor-product Lagrange space per element
while the geometry stays bilinear from the four corner vertices, so curved
meshes cost nothing extra in the reference tables.  Two quadrature paths
are supported: a 3x3 Gauss rule with a consistent (factorized) mass
matrix, and a 3x3 Gauss-Lobatto rule collocated with the nodes, which
makes the mass matrix exactly diagonal.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .medium import IsotropicMedium
from .mesh import MeshError, QuadMesh

_GAUSS3_POINTS = (-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0))
_GAUSS3_WEIGHTS = (5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0)
_LOBATTO3_POINTS = (-1.0, 0.0, 1.0)
_LOBATTO3_WEIGHTS = (1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0)

# local node n = 3*ix + iy sits at (ref ix, ref iy) with ref = (-1, 0, 1);
# corner c of the connectivity (bl, br, tr, tl) maps to these local slots
_CORNER_SLOTS = (0, 6, 8, 2)
_EDGE_SLOTS = (3, 7, 5, 1)  # bottom, right, top, left edge midpoints
_CENTER_SLOT = 4


class AssemblyError(ValueError):
    """Incompatible basis, quadrature, or input sizes."""


class PointLocationError(MeshError):
    """A probe point could not be placed inside any element."""


def _lagrange_1d(t):
    t = np.asarray(t, dtype=float)
    return np.stack([0.5 * t * (t - 1), 1 - t * t, 0.5 * t * (t + 1)], axis=-1)


def _lagrange_1d_deriv(t):
    t = np.asarray(t, dtype=float)
    return np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)


@dataclass(frozen=True)
class FemBasis:
    """Nine-node biquadratic Lagrange basis on the reference square.

    The equidistant and three-point Gauss-Lobatto node sets coincide at
    this order, so node_layout only records which quadrature pairing the
    caller intends; positions are (-1, 0, 1) either way.
    """

    node_layout: str = "equidistant"

    def __post_init__(self):
        if self.node_layout not in ("equidistant", "gauss_lobatto"):
            raise AssemblyError(f"unknown node layout {self.node_layout!r}")

    @property
    def nodes_per_element(self) -> int:
        return 9

    def shape_values(self, xi, eta) -> np.ndarray:
        """phi_n at (xi, eta); trailing axis runs over n = 3*ix + iy."""
        lx = _lagrange_1d(xi)
        ly = _lagrange_1d(eta)
        vals = lx[..., :, None] * ly[..., None, :]
        return vals.reshape(vals.shape[:-2] + (9,))

    def shape_gradients(self, xi, eta) -> np.ndarray:
        """(d phi/d xi, d phi/d eta), shape (..., 9, 2)."""
        lx, ly = _lagrange_1d(xi), _lagrange_1d(eta)
        dlx, dly = _lagrange_1d_deriv(xi), _lagrange_1d_deriv(eta)
        gx = (dlx[..., :, None] * ly[..., None, :]).reshape(lx.shape[:-1] + (9,))
        gy = (lx[..., :, None] * dly[..., None, :]).reshape(lx.shape[:-1] + (9,))
        return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True)
class Quadrature:
    """Reference-square rule: points (n, 2) and weights (n,)."""

    rule: str
    points: np.ndarray
    weights: np.ndarray


def _tensor_rule(rule: str, pts_1d, wts_1d) -> Quadrature:
    pts_1d = np.asarray(pts_1d, dtype=float)
    wts_1d = np.asarray(wts_1d, dtype=float)
    xi, eta = [a.ravel() for a in np.meshgrid(pts_1d, pts_1d, indexing="ij")]
    wx, wy = [a.ravel() for a in np.meshgrid(wts_1d, wts_1d, indexing="ij")]
    return Quadrature(rule, np.column_stack([xi, eta]), wx * wy)


def quadrature_rule(rule: str) -> Quadrature:
    if rule == "gauss3":
        return _tensor_rule(rule, _GAUSS3_POINTS, _GAUSS3_WEIGHTS)
    if rule == "gll3":
        return _tensor_rule(rule, _LOBATTO3_POINTS, _LOBATTO3_WEIGHTS)
    raise AssemblyError(f"unknown quadrature rule {rule!r}")


def tensor_gauss_rule(n: int) -> Quadrature:
    """Dense n x n Gauss-Legendre rule, mainly for cross-checks."""
    pts, wts = np.polynomial.legendre.leggauss(n)
    return _tensor_rule(f"gauss{n}", pts, wts)


def _geometry_tables(xi, eta):
    """Bilinear corner shape functions and their reference gradients."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    vals = 0.25 * np.stack(
        [
            (1 - xi) * (1 - eta),
            (1 + xi) * (1 - eta),
            (1 + xi) * (1 + eta),
            (1 - xi) * (1 + eta),
        ],
        axis=-1,
    )
    d_xi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    d_eta = 0.25 * np.stack([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)], axis=-1)
    return vals, d_xi, d_eta


@dataclass(frozen=True)
class NodeNumbering:
    """Global node ids per element, with periodic seams already merged."""

    n_nodes: int
    element_nodes: np.ndarray
    node_coords: np.ndarray


def global_numbering(mesh: QuadMesh) -> NodeNumbering:
    """Deterministic vertex/edge/center numbering shared by all assembly."""
    nv = len(mesh.vertices)
    parent = np.arange(nv)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in mesh.periodic_pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(v) for v in range(nv)])

    unique_roots = np.unique(roots)
    corner_roots = roots[mesh.elements]  # (ne, 4)
    vertex_nodes = np.searchsorted(unique_roots, corner_roots)
    n_vertex = len(unique_roots)

    edge_pairs = np.stack(
        [
            corner_roots[:, (0, 1)],
            corner_roots[:, (1, 2)],
            corner_roots[:, (2, 3)],
            corner_roots[:, (3, 0)],
        ],
        axis=1,
    )
    keys = np.sort(edge_pairs.reshape(-1, 2), axis=1)
    unique_edges, edge_ids = np.unique(keys, axis=0, return_inverse=True)
    if np.bincount(edge_ids).max() > 2:
        # two geometrically distinct edges join the same vertex pair, which
        # happens on periodic strips narrower than three element columns
        raise MeshError("periodic seam makes distinct edges indistinguishable; "
                        "use at least 3 element columns")
    edge_nodes = n_vertex + edge_ids.reshape(-1, 4)
    n_edge = len(unique_edges)

    ne = mesh.n_elements
    element_nodes = np.empty((ne, 9), dtype=int)
    element_nodes[:, list(_CORNER_SLOTS)] = vertex_nodes
    element_nodes[:, list(_EDGE_SLOTS)] = edge_nodes
    element_nodes[:, _CENTER_SLOT] = n_vertex + n_edge + np.arange(ne)

    corners = mesh.element_corners()
    node_coords = np.concatenate(
        [
            mesh.vertices[unique_roots],
            0.5 * (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]]),
            corners.mean(axis=1),
        ]
    )
    return NodeNumbering(n_vertex + n_edge + ne, element_nodes, node_coords)


@dataclass(frozen=True)
class FemSystem:
    """Assembled operators plus the interface trace machinery.

    Displacement dofs are ordered component-major: dof = comp*n_nodes +
    node with comp 0 horizontal, 1 vertical.  The semi-discrete motion is
    mass @ d(xi)/dt = -stiffness @ b - penalty + forcing, d(b)/dt = xi.
    """

    mesh: QuadMesh
    basis: FemBasis
    quadrature: Quadrature
    numbering: NodeNumbering
    dof_map: np.ndarray
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass_node: sp.csr_matrix
    interface_trace: sp.csr_matrix
    interface_weights: np.ndarray
    interface_coords: np.ndarray
    lumped: bool
    mass_lu: object
    mass_diag: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.numbering.n_nodes

    @property
    def n_dofs(self) -> int:
        return 2 * self.numbering.n_nodes

    def apply_mass_inverse(self, rhs: np.ndarray) -> np.ndarray:
        if self.lumped:
            return rhs / self.mass_diag
        both = self.mass_lu.solve(rhs.reshape(2, -1).T)
        return both.T.reshape(rhs.shape)


@dataclass
class FemState:
    """Displacement coefficients b and their staggered velocities xi."""

    b: np.ndarray
    xi: np.ndarray

    @classmethod
    def zeros(cls, system: FemSystem) -> "FemState":
        return cls(np.zeros(system.n_dofs), np.zeros(system.n_dofs))

    def copy(self) -> "FemState":
        return FemState(self.b.copy(), self.xi.copy())


def _edge_rule(rule: str):
    # the interface exchange always runs on a 3-point family; custom volume
    # rules (used by quadrature cross-checks) keep the gauss3 interface
    if rule == "gll3":
        return np.asarray(_LOBATTO3_POINTS), np.asarray(_LOBATTO3_WEIGHTS)
    return np.asarray(_GAUSS3_POINTS), np.asarray(_GAUSS3_WEIGHTS)


def _interface_trace(mesh, basis, numbering, rule):
    """Sparse evaluation of nodal fields at the interface quadrature points."""
    t_1d, w_1d = _edge_rule(rule)
    vals = basis.shape_values(t_1d, np.full(3, -1.0))  # (3, 9)
    n_iface = len(mesh.interface_elements)
    rows, cols, data = [], [], []
    weights = np.empty(3 * n_iface)
    coords = np.empty((3 * n_iface, 2))
    for k, (elem, edge) in enumerate(mesh.interface_elements):
        if edge != 0:
            raise MeshError(
                f"interface edge of element {elem} is local edge {edge}, expected 0"
            )
        quad = mesh.elements[elem]
        p0, p1 = mesh.vertices[quad[0]], mesh.vertices[quad[1]]
        if abs(p1[1] - p0[1]) > 1e-9 * max(1.0, abs(p1[0] - p0[0])):
            raise MeshError(f"interface edge of element {elem} is not horizontal")
        length = p1[0] - p0[0]
        if length <= 0:
            raise MeshError(f"interface edge of element {elem} runs right to left")
        weights[3 * k : 3 * k + 3] = 0.5 * length * w_1d
        frac = 0.5 * (t_1d + 1)
        coords[3 * k : 3 * k + 3, 0] = p0[0] + frac * (p1[0] - p0[0])
        coords[3 * k : 3 * k + 3, 1] = p0[1]
        for q in range(3):
            keep = np.abs(vals[q]) > 0
            rows.extend([3 * k + q] * int(keep.sum()))
            cols.extend(numbering.element_nodes[elem][keep])
            data.extend(vals[q][keep])
    trace = sp.csr_matrix(
        (data, (rows, cols)), shape=(3 * n_iface, numbering.n_nodes)
    )
    return trace, weights, coords


def assemble(
    mesh: QuadMesh,
    basis: FemBasis,
    quadrature,
    medium: IsotropicMedium,
    chunk: int = 4096,
) -> FemSystem:
    """Build mass, stiffness, and the interface trace for a medium.

    quadrature is a rule id ("gauss3" or "gll3") or a Quadrature.  The
    gll3 rule requires basis.node_layout == "gauss_lobatto" and yields an
    exactly diagonal mass matrix; anything else factorizes the consistent
    node mass once for reuse.
    """
    if isinstance(quadrature, str):
        quadrature = quadrature_rule(quadrature)
    lumped = quadrature.rule == "gll3"
    if lumped and basis.node_layout != "gauss_lobatto":
        raise AssemblyError("gll3 quadrature requires the gauss_lobatto node layout")

    numbering = global_numbering(mesh)
    n = numbering.n_nodes
    pts, wq = quadrature.points, quadrature.weights
    geo_vals, geo_dxi, geo_deta = _geometry_tables(pts[:, 0], pts[:, 1])
    bas_vals = basis.shape_values(pts[:, 0], pts[:, 1])  # (nq, 9)
    bas_grads = basis.shape_gradients(pts[:, 0], pts[:, 1])  # (nq, 9, 2)

    m_rows, m_cols, m_data = [], [], []
    k_rows, k_cols, k_data = [], [], []
    for start in range(0, mesh.n_elements, chunk):
        sl = slice(start, min(start + chunk, mesh.n_elements))
        gn = numbering.element_nodes[sl]
        corners = mesh.element_corners(sl)
        xq = np.einsum("qa,ead->eqd", geo_vals, corners)
        t_xi = np.einsum("qa,ead->eqd", geo_dxi, corners)
        t_eta = np.einsum("qa,ead->eqd", geo_deta, corners)
        det = t_xi[..., 0] * t_eta[..., 1] - t_xi[..., 1] * t_eta[..., 0]
        if det.min() <= 0:
            bad = start + int(np.argwhere(det.min(axis=1) <= 0)[0, 0])
            raise MeshError(f"non-positive Jacobian in element {bad}")
        inv_det = 1.0 / det[..., None]
        gx = (bas_grads[None, ..., 0] * t_eta[..., 1, None]
              - bas_grads[None, ..., 1] * t_xi[..., 1, None]) * inv_det
        gy = (bas_grads[None, ..., 1] * t_xi[..., 0, None]
              - bas_grads[None, ..., 0] * t_eta[..., 0, None]) * inv_det

        x, y = xq[..., 0], xq[..., 1]
        medium.check_at(x, y)
        rho = np.broadcast_to(np.asarray(medium.density(x, y), float), det.shape)
        lam = np.broadcast_to(np.asarray(medium.lame_lambda(x, y), float), det.shape)
        mu = np.broadcast_to(np.asarray(medium.mu(x, y), float), det.shape)
        jw = det * wq

        m_elem = np.einsum("eq,qa,qb->eab", rho * jw, bas_vals, bas_vals)
        lam2mu = (lam + 2 * mu) * jw
        k11 = np.einsum("eq,eqa,eqb->eab", lam2mu, gx, gx) \
            + np.einsum("eq,eqa,eqb->eab", mu * jw, gy, gy)
        k22 = np.einsum("eq,eqa,eqb->eab", mu * jw, gx, gx) \
            + np.einsum("eq,eqa,eqb->eab", lam2mu, gy, gy)
        k12 = np.einsum("eq,eqa,eqb->eab", lam * jw, gx, gy) \
            + np.einsum("eq,eqa,eqb->eab", mu * jw, gy, gx)
        k21 = k12.transpose(0, 2, 1)

        rr = np.repeat(gn, 9, axis=1).ravel()
        cc = np.tile(gn, (1, 9)).ravel()
        m_rows.append(rr)
        m_cols.append(cc)
        m_data.append(m_elem.ravel())
        for block, dr, dc in ((k11, 0, 0), (k12, 0, n), (k21, n, 0), (k22, n, n)):
            k_rows.append(rr + dr)
            k_cols.append(cc + dc)
            k_data.append(block.ravel())

    mass_node = sp.csr_matrix(
        (np.concatenate(m_data), (np.concatenate(m_rows), np.concatenate(m_cols))),
        shape=(n, n),
    )
    mass_node.eliminate_zeros()
    stiffness = sp.csr_matrix(
        (np.concatenate(k_data), (np.concatenate(k_rows), np.concatenate(k_cols))),
        shape=(2 * n, 2 * n),
    )
    mass = sp.block_diag([mass_node, mass_node], format="csr")

    if lumped:
        diag = mass_node.diagonal()
        if diag.min() <= 0:
            raise AssemblyError("collocated mass has a non-positive diagonal entry")
        mass_lu, mass_diag = None, np.concatenate([diag, diag])
    else:
        mass_lu, mass_diag = splu(mass_node.tocsc()), None

    trace, weights, coords = _interface_trace(mesh, basis, numbering, quadrature.rule)
    dof_map = np.concatenate(
        [numbering.element_nodes, n + numbering.element_nodes], axis=1
    )
    return FemSystem(
        mesh=mesh,
        basis=basis,
        quadrature=quadrature,
        numbering=numbering,
        dof_map=dof_map,
        mass=mass,
        stiffness=stiffness,
        mass_node=mass_node,
        interface_trace=trace,
        interface_weights=weights,
        interface_coords=coords,
        lumped=lumped,
        mass_lu=mass_lu,
        mass_diag=mass_diag,
    )


def interface_velocity_trace(xi: np.ndarray, system: FemSystem):
    """Both velocity components at the interface quadrature points.

    Points belonging to neighbouring elements are kept separate even when
    they coincide geometrically, matching the coupling row layout.
    """
    if xi.shape != (system.n_dofs,):
        raise AssemblyError(f"expected {system.n_dofs} dofs, got {xi.shape}")
    n = system.n_nodes
    return system.interface_trace @ xi[:n], system.interface_trace @ xi[n:]


def interface_penalty(tractions_at_q, system: FemSystem) -> np.ndarray:
    """Weak interface traction load; enters as mass @ d(xi)/dt = ... - p.

    tractions_at_q is the (shear, normal) pair sampled at the interface
    quadrature points, ordered like the trace rows.
    """
    shear_q, normal_q = (np.asarray(t, dtype=float) for t in tractions_at_q)
    nq = system.interface_trace.shape[0]
    for arr in (shear_q, normal_q):
        if arr.shape != (nq,):
            raise AssemblyError(f"expected {nq} traction samples, got {arr.shape}")
    p = np.empty(system.n_dofs)
    n = system.n_nodes
    p[:n] = system.interface_trace.T @ (system.interface_weights * shear_q)
    p[n:] = system.interface_trace.T @ (system.interface_weights * normal_q)
    return p


def fem_energy(b, xi_half_minus, xi_half_plus, system: FemSystem):
    """(kinetic, potential) with the staggered kinetic product."""
    kinetic = 0.5 * float(xi_half_minus @ (system.mass @ xi_half_plus))
    potential = 0.5 * float(b @ (system.stiffness @ b))
    return kinetic, potential


def _invert_bilinear(corners, point, tol=1e-12, max_iter=25):
    """Newton solve for the reference coordinates of a physical point."""
    ref = np.zeros(2)
    for _ in range(max_iter):
        vals, d_xi, d_eta = _geometry_tables(ref[0], ref[1])
        residual = vals @ corners - point
        jac = np.stack([d_xi @ corners, d_eta @ corners], axis=-1)
        try:
            step = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError:
            return ref, False
        ref -= step
        if np.abs(step).max() <= tol:
            return ref, True
    return ref, False


def locate_point(mesh: QuadMesh, point, slack: float = 1e-9):
    """Containing element and reference coordinates of a physical point.

    Near a jittered periodic seam the domain boundary is jagged, so the
    point is also tried shifted by one period in either direction.
    """
    point = np.asarray(point, dtype=float)
    corners = mesh.element_corners()
    lo = corners.min(axis=1)
    hi = corners.max(axis=1)
    pad = slack * np.maximum(1.0, hi - lo)
    shifts = [0.0]
    if len(mesh.periodic_pairs):
        left, right = mesh.periodic_pairs[0]
        period = mesh.vertices[right, 0] - mesh.vertices[left, 0]
        shifts += [-period, period]
    for shift in shifts:
        probe = point + (shift, 0.0)
        inside = np.all((probe >= lo - pad) & (probe <= hi + pad), axis=1)
        candidates = np.flatnonzero(inside)
        if len(candidates):
            centroids = corners[candidates].mean(axis=1)
            order = np.argsort(((centroids - probe) ** 2).sum(axis=1))
            candidates = candidates[order]
        for elem in candidates:
            ref, converged = _invert_bilinear(corners[elem], probe)
            if converged and np.abs(ref).max() <= 1 + slack:
                return int(elem), float(ref[0]), float(ref[1])
    raise PointLocationError(f"point {tuple(point)} is outside the mesh")


@dataclass(frozen=True)
class PointProbe:
    """Cached interpolation stencil for one physical point."""

    element: int
    ref: tuple
    nodes: np.ndarray
    values: np.ndarray
    gradients: np.ndarray

    def evaluate(self, node_coeffs: np.ndarray) -> float:
        return float(self.values @ node_coeffs[self.nodes])


def point_probe(
    mesh: QuadMesh, basis: FemBasis, point, numbering: NodeNumbering = None
) -> PointProbe:
    if numbering is None:
        numbering = global_numbering(mesh)
    elem, xi, eta = locate_point(mesh, point)
    corners = mesh.element_corners([elem])[0]
    _, d_xi, d_eta = _geometry_tables(xi, eta)
    t_xi, t_eta = d_xi @ corners, d_eta @ corners
    det = t_xi[0] * t_eta[1] - t_xi[1] * t_eta[0]
    grads_ref = basis.shape_gradients(xi, eta)  # (9, 2)
    gx = (grads_ref[:, 0] * t_eta[1] - grads_ref[:, 1] * t_xi[1]) / det
    gy = (grads_ref[:, 1] * t_xi[0] - grads_ref[:, 0] * t_eta[0]) / det
    return PointProbe(
        element=elem,
        ref=(xi, eta),
        nodes=numbering.element_nodes[elem].copy(),
        values=basis.shape_values(xi, eta),
        gradients=np.column_stack([gx, gy]),
    )


def evaluate_at_point(coeffs, mesh: QuadMesh, basis: FemBasis, point) -> float:
    """Interpolate one nodal scalar field at a physical point."""
    coeffs = np.asarray(coeffs, dtype=float)
    numbering = global_numbering(mesh)
    if coeffs.shape != (numbering.n_nodes,):
        raise AssemblyError(
            f"expected {numbering.n_nodes} nodal coefficients, got {coeffs.shape}"
        )
    return point_probe(mesh, basis, point, numbering).evaluate(coeffs)
