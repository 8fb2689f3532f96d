"""Structured simplex meshes of the unit square/cube plus the index machinery
that moves data between global vectors and per-cell blocks.

Meshes are generated by splitting a regular grid: each square into 2 triangles,
each cube into 6 tetrahedra (one per axis permutation, the Kuhn subdivision).
Cell connectivity is deliberately kept as an explicit index table so that all
downstream access is indirect, like a genuinely unstructured mesh.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .errors import InvalidDimensionError, OrientationError, ShapeError

__all__ = [
    "Mesh",
    "CellGeometry",
    "FieldLayout",
    "generate_unit_simplex_mesh",
    "compute_geometry",
    "gather_coefficients",
    "scatter_add_element_vectors",
    "interior_vertex_mask",
    "dump_mesh",
]

# Axis permutations for the 6-tetrahedron cube subdivision, with parity.
_CUBE_PERMS = (
    ((0, 1, 2), 1),
    ((0, 2, 1), -1),
    ((1, 0, 2), -1),
    ((1, 2, 0), 1),
    ((2, 0, 1), 1),
    ((2, 1, 0), -1),
)


@dataclass(frozen=True)
class Mesh:
    """Simplicial mesh: vertex coordinates and cell-to-vertex connectivity."""

    dim: int
    vertices: np.ndarray  # (n_vertices, dim) float64
    cells: np.ndarray  # (n_cells, dim + 1) int64

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class CellGeometry:
    """Per-cell affine map data: inverse Jacobians and determinants."""

    inv_jacobians: np.ndarray  # (n_cells, d, d) float64, row-major
    determinants: np.ndarray  # (n_cells,) float64, all > 0

    @property
    def n_cells(self) -> int:
        return self.determinants.shape[0]


@dataclass(frozen=True)
class FieldLayout:
    """Interleaved global layout: entry v*n_comp + c holds component c at vertex v."""

    n_comp: int = 1

    def global_size(self, mesh: Mesh) -> int:
        return mesh.n_vertices * self.n_comp


def generate_unit_simplex_mesh(dim: int, n: int) -> Mesh:
    """Mesh [0,1]^dim with n subdivisions per axis.

    2D yields 2*n^2 triangles on (n+1)^2 vertices, 3D yields 6*n^3 positively
    oriented tetrahedra on (n+1)^3 vertices.
    """
    if dim not in (2, 3):
        raise InvalidDimensionError(f"dim must be 2 or 3, got {dim}")
    if n < 1:
        raise ValueError(f"need at least one subdivision per axis, got {n}")

    ticks = np.linspace(0.0, 1.0, n + 1)
    if dim == 2:
        xg, yg = np.meshgrid(ticks, ticks, indexing="xy")
        vertices = np.column_stack([xg.ravel(), yg.ravel()])

        ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        ix = ix.ravel()
        iy = iy.ravel()
        v00 = iy * (n + 1) + ix
        v10 = v00 + 1
        v11 = v10 + (n + 1)
        v01 = v00 + (n + 1)
        # Both triangles are counter-clockwise.
        tris = np.empty((n * n, 2, 3), dtype=np.int64)
        tris[:, 0, 0] = v00
        tris[:, 0, 1] = v10
        tris[:, 0, 2] = v11
        tris[:, 1, 0] = v00
        tris[:, 1, 1] = v11
        tris[:, 1, 2] = v01
        cells = tris.reshape(-1, 3)
    else:
        xg, yg, zg = np.meshgrid(ticks, ticks, ticks, indexing="xy")
        # Vertex id (ix, iy, iz) -> (iz*(n+1) + iy)*(n+1) + ix.
        vertices = np.empty(((n + 1) ** 3, 3))
        idx = np.arange((n + 1) ** 3)
        vertices[:, 0] = ticks[idx % (n + 1)]
        vertices[:, 1] = ticks[(idx // (n + 1)) % (n + 1)]
        vertices[:, 2] = ticks[idx // ((n + 1) * (n + 1))]

        base = np.arange(n)
        bx, by, bz = np.meshgrid(base, base, base, indexing="ij")
        corner = np.stack([bx.ravel(), by.ravel(), bz.ravel()], axis=1)

        def vid(pt: np.ndarray) -> np.ndarray:
            return (pt[:, 2] * (n + 1) + pt[:, 1]) * (n + 1) + pt[:, 0]

        eye = np.eye(3, dtype=np.int64)
        n_cubes = corner.shape[0]
        tets = np.empty((n_cubes, 6, 4), dtype=np.int64)
        for t, (perm, parity) in enumerate(_CUBE_PERMS):
            p0 = corner
            p1 = p0 + eye[perm[0]]
            p2 = p1 + eye[perm[1]]
            p3 = p2 + eye[perm[2]]
            if parity > 0:
                path = (p0, p1, p2, p3)
            else:
                # Odd permutations trace the path with negative orientation;
                # swapping the last two vertices restores detJ > 0.
                path = (p0, p1, p3, p2)
            for k, pt in enumerate(path):
                tets[:, t, k] = vid(pt)
        cells = tets.reshape(-1, 4)

    return Mesh(dim=dim, vertices=vertices, cells=cells)


def compute_geometry(mesh: Mesh) -> CellGeometry:
    """Invert the per-cell affine maps.

    The Jacobian's k-th column is vertex[k+1] - vertex[0]; determinants are
    d! times the cell volume.  Raises OrientationError on the first cell with
    detJ <= 0.
    """
    d = mesh.dim
    v0 = mesh.vertices[mesh.cells[:, 0]]
    edges = mesh.vertices[mesh.cells[:, 1:]] - v0[:, None, :]  # (n_cells, d, d), rows
    jac = np.transpose(edges, (0, 2, 1))  # columns are edge vectors

    if d == 2:
        a, b = jac[:, 0, 0], jac[:, 0, 1]
        c, e = jac[:, 1, 0], jac[:, 1, 1]
        det = a * e - b * c
        _check_orientation(det)
        inv = np.empty_like(jac)
        inv[:, 0, 0] = e / det
        inv[:, 0, 1] = -b / det
        inv[:, 1, 0] = -c / det
        inv[:, 1, 1] = a / det
    else:
        m = jac
        cof00 = m[:, 1, 1] * m[:, 2, 2] - m[:, 1, 2] * m[:, 2, 1]
        cof01 = m[:, 1, 2] * m[:, 2, 0] - m[:, 1, 0] * m[:, 2, 2]
        cof02 = m[:, 1, 0] * m[:, 2, 1] - m[:, 1, 1] * m[:, 2, 0]
        det = m[:, 0, 0] * cof00 + m[:, 0, 1] * cof01 + m[:, 0, 2] * cof02
        _check_orientation(det)
        inv = np.empty_like(m)
        inv[:, 0, 0] = cof00 / det
        inv[:, 1, 0] = cof01 / det
        inv[:, 2, 0] = cof02 / det
        inv[:, 0, 1] = (m[:, 0, 2] * m[:, 2, 1] - m[:, 0, 1] * m[:, 2, 2]) / det
        inv[:, 1, 1] = (m[:, 0, 0] * m[:, 2, 2] - m[:, 0, 2] * m[:, 2, 0]) / det
        inv[:, 2, 1] = (m[:, 0, 1] * m[:, 2, 0] - m[:, 0, 0] * m[:, 2, 1]) / det
        inv[:, 0, 2] = (m[:, 0, 1] * m[:, 1, 2] - m[:, 0, 2] * m[:, 1, 1]) / det
        inv[:, 1, 2] = (m[:, 0, 2] * m[:, 1, 0] - m[:, 0, 0] * m[:, 1, 2]) / det
        inv[:, 2, 2] = (m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]) / det

    return CellGeometry(inv_jacobians=inv, determinants=det)


def _check_orientation(det: np.ndarray) -> None:
    bad = np.flatnonzero(det <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise OrientationError(
            f"cell {i} is degenerate or negatively oriented (detJ = {det[i]!r})"
        )


def gather_coefficients(
    mesh: Mesh, layout: FieldLayout, global_vec: np.ndarray
) -> np.ndarray:
    """Pull per-cell coefficient blocks out of a global vector.

    Returns an (n_cells, dim+1, n_comp) array; block[c][b][k] is component k
    at local vertex b of cell c.
    """
    expected = layout.global_size(mesh)
    flat = np.asarray(global_vec)
    if flat.shape != (expected,):
        raise ShapeError(
            f"global vector has shape {flat.shape}, expected ({expected},)"
        )
    by_vertex = flat.reshape(mesh.n_vertices, layout.n_comp)
    return by_vertex[mesh.cells]


def scatter_add_element_vectors(
    mesh: Mesh, layout: FieldLayout, elem_vecs: np.ndarray
) -> np.ndarray:
    """Sum per-cell blocks into a global vector, ascending cell index.

    The fixed summation order makes repeated runs bit-identical in any
    floating precision.
    """
    elem = np.asarray(elem_vecs)
    expected = (mesh.n_cells, mesh.dim + 1, layout.n_comp)
    if elem.shape != expected:
        raise ShapeError(f"element vectors have shape {elem.shape}, expected {expected}")
    out = np.zeros((mesh.n_vertices, layout.n_comp), dtype=elem.dtype)
    np.add.at(out, mesh.cells.ravel(), elem.reshape(-1, layout.n_comp))
    return out.ravel()


def interior_vertex_mask(mesh: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of vertices strictly inside the unit box."""
    v = mesh.vertices
    on_boundary = (np.abs(v) < tol) | (np.abs(v - 1.0) < tol)
    return ~on_boundary.any(axis=1)


def dump_mesh(mesh: Mesh, stream: TextIO) -> None:
    """Write the debug text format: header, vertex lines, cell lines."""
    stream.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
    for v in mesh.vertices:
        stream.write(" ".join(f"{x:.17g}" for x in v) + "\n")
    for c in mesh.cells:
        stream.write(" ".join(str(int(i)) for i in c) + "\n")
