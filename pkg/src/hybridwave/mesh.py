"""Quadrilateral meshes for the shallow region.

Meshes are periodic in x, rest on a flat horizontal interface at the
bottom, and may follow a sinusoidal free surface at the top.  Element
geometry is bilinear from the four corner vertices; interior vertices of
topography meshes carry a deterministic jitter so the elements are
genuinely irregular quadrilaterals rather than stretched rectangles.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_JITTER_SEED = 173503


class MeshError(ValueError):
    """Mesh construction or geometry failure."""


@dataclass(frozen=True)
class QuadMesh:
    """Vertices plus 4-vertex counter-clockwise connectivity.

    interface_elements lists (element, local edge) pairs along the bottom
    coupling boundary, ordered left to right; local edge k joins corners k
    and (k+1) mod 4.  periodic_pairs identifies left-seam vertices with
    their right-seam copies.
    """

    vertices: np.ndarray
    elements: np.ndarray
    interface_elements: np.ndarray
    periodic_pairs: np.ndarray

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_corners(self, indices=None) -> np.ndarray:
        """Corner coordinates, shape (n, 4, 2)."""
        elems = self.elements if indices is None else self.elements[indices]
        return self.vertices[elems]

    def interface_edge_nodes(self) -> np.ndarray:
        """Vertex index pairs of the interface edges, in interface order."""
        out = np.empty((len(self.interface_elements), 2), dtype=int)
        for row, (elem, edge) in enumerate(self.interface_elements):
            quad = self.elements[elem]
            out[row] = (quad[edge], quad[(edge + 1) % 4])
        return out


def jacobian_extrema(mesh: QuadMesh) -> tuple[float, float]:
    """(min, max) of det J over all elements at the corner reference points.

    The determinant of a bilinear map is linear in each reference
    coordinate separately, so corner positivity implies positivity on the
    whole element.
    """
    corners = mesh.element_corners()
    ref = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
    dets = []
    for xi, eta in ref:
        dn_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        dn_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        t_xi = np.einsum("a,ead->ed", dn_dxi, corners)
        t_eta = np.einsum("a,ead->ed", dn_deta, corners)
        dets.append(t_xi[:, 0] * t_eta[:, 1] - t_xi[:, 1] * t_eta[:, 0])
    dets = np.stack(dets)
    return float(dets.min()), float(dets.max())


def _grid_ids(nx: int, ny: int) -> np.ndarray:
    return np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)


def _grid_topology(nx: int, ny: int):
    """Connectivity, interface list, and periodic pairs of an (nx, ny) grid."""
    ids = _grid_ids(nx, ny)
    elements = np.empty((nx * ny, 4), dtype=int)
    for i in range(nx):
        for j in range(ny):
            elements[i * ny + j] = (
                ids[i, j], ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]
            )
    interface = np.array([(i * ny, 0) for i in range(nx)], dtype=int)
    pairs = np.column_stack([ids[0], ids[nx]])
    return elements, interface, pairs


def structured_mesh(nx: int, ny: int, dx: float, origin=(0.0, 0.0)) -> QuadMesh:
    """Uniform square elements of side dx, bottom edge on the interface."""
    if nx < 1 or ny < 1:
        raise MeshError("need at least one element in each direction")
    ids = _grid_ids(nx, ny)
    vertices = np.empty((ids.size, 2))
    i, j = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    vertices[ids.ravel(), 0] = origin[0] + i.ravel() * dx
    vertices[ids.ravel(), 1] = origin[1] + j.ravel() * dx
    elements, interface, pairs = _grid_topology(nx, ny)
    return QuadMesh(vertices, elements, interface, pairs)


def sinusoidal_mesh(
    nx: int,
    ny: int,
    width: float,
    base_height: float,
    amplitude_fraction: float,
    origin=(0.0, 0.0),
    jitter: float = 0.1,
    seed: int = DEFAULT_JITTER_SEED,
) -> QuadMesh:
    """Columns graded from the flat interface up to a cosine free surface.

    The top boundary is y = base_height - a*(1 - cos(2 pi x / width)) with
    a = amplitude_fraction*base_height, so the altitude varies by 2a peak
    to trough.  Interior vertices get a deterministic jitter of up to
    ``jitter`` times the local spacing (interface and top rows excluded);
    if that folds an element, the jitter is halved and the mesh rebuilt,
    up to three times.
    """
    if nx < 1 or ny < 1:
        raise MeshError("need at least one element in each direction")
    if not amplitude_fraction < 1:
        raise MeshError("amplitude_fraction must be below 1")
    if amplitude_fraction < 0:
        raise MeshError("amplitude_fraction must be non-negative")
    amplitude = amplitude_fraction * base_height
    if base_height - 2 * amplitude <= 0:
        raise MeshError(
            f"amplitude_fraction={amplitude_fraction} leaves no room above the trough"
        )
    dx = width / nx
    x_cols = np.arange(nx + 1) * dx
    heights = base_height - amplitude * (1 - np.cos(2 * np.pi * x_cols / width))
    heights[nx] = heights[0]  # exact seam match

    elements, interface, pairs = _grid_topology(nx, ny)
    ids = _grid_ids(nx, ny)
    for attempt in range(4):
        scale = jitter / 2**attempt
        rng = np.random.default_rng(seed)
        vertices = np.empty((ids.size, 2))
        for i in range(nx + 1):
            col_x = np.full(ny + 1, origin[0] + x_cols[i])
            col_y = origin[1] + np.arange(ny + 1) * (heights[i] / ny)
            if scale > 0 and i < nx:
                wiggle = rng.uniform(-1.0, 1.0, (ny - 1, 2))
                col_x[1:ny] += wiggle[:, 0] * scale * dx
                col_y[1:ny] += wiggle[:, 1] * scale * (heights[i] / ny)
            vertices[ids[i], 0] = col_x
            vertices[ids[i], 1] = col_y
        # the seam column repeats column zero's jitter, shifted by the width
        vertices[ids[nx], 0] = vertices[ids[0], 0] + width
        vertices[ids[nx], 1] = vertices[ids[0], 1]
        mesh = QuadMesh(vertices, elements, interface, pairs)
        if jacobian_extrema(mesh)[0] > 0:
            return mesh
    raise MeshError(
        f"jitter={jitter} folds elements even after three halvings (seed={seed})"
    )


def write_mesh(path, mesh: QuadMesh) -> None:
    """Plain-text dump: counts, vertices, connectivity, interface, pairs."""
    lines = [
        "quad-mesh 1",
        f"counts {len(mesh.vertices)} {len(mesh.elements)} "
        f"{len(mesh.interface_elements)} {len(mesh.periodic_pairs)}",
    ]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [" ".join(map(str, quad)) for quad in mesh.elements]
    lines += [f"{elem} {edge}" for elem, edge in mesh.interface_elements]
    lines += [f"{a} {b}" for a, b in mesh.periodic_pairs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> QuadMesh:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "quad-mesh 1":
        raise MeshError(f"{path}: not a mesh file")
    tag, *counts = lines[1].split()
    if tag != "counts" or len(counts) != 4:
        raise MeshError(f"{path}: malformed counts line")
    nv, ne, ni, npairs = map(int, counts)
    expected = 2 + nv + ne + ni + npairs
    if len(lines) != expected:
        raise MeshError(f"{path}: expected {expected} lines, found {len(lines)}")
    cursor = 2
    vertices = np.array(
        [[float(t) for t in line.split()] for line in lines[cursor : cursor + nv]]
    )
    cursor += nv
    elements = np.array(
        [[int(t) for t in line.split()] for line in lines[cursor : cursor + ne]],
        dtype=int,
    ).reshape(ne, 4)
    cursor += ne
    interface = np.array(
        [[int(t) for t in line.split()] for line in lines[cursor : cursor + ni]],
        dtype=int,
    ).reshape(ni, 2)
    cursor += ni
    pairs = np.array(
        [[int(t) for t in line.split()] for line in lines[cursor : cursor + npairs]],
        dtype=int,
    ).reshape(npairs, 2)
    return QuadMesh(vertices, elements, interface, pairs)
