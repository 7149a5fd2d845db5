"""Regular triangle mesh over an image grid.

An h x w pixel image gets an (h+1) x (w+1) vertex grid; vertex (i, j) sits at
pixel coordinate (x, y) = (j, i) with the origin at the top-left corner. Every
pixel cell is split along its lower-left to upper-right diagonal, giving 2*h*w
faces, all with signed area +1/2 at rest. Faces are numbered cell-major: cell
(i, j) owns faces 2*(i*w + j) (triangle touching the top-left corner) and
2*(i*w + j) + 1 (triangle touching the bottom-right corner).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateMeshError, FieldShapeError, InvalidDimensionError

_AREA_EPS = 1e-12


@dataclass(eq=False)
class TriMesh:
    """Triangulated image grid with cached per-face derivative operators."""

    height: int
    width: int
    vertices: np.ndarray          # (n_vertices, 2) float64, rest positions (x, y)
    faces: np.ndarray             # (n_faces, 3) int, positively oriented
    boundary: np.ndarray          # (n_vertices,) bool
    face_areas: np.ndarray = field(repr=False, default=None)
    grad_x: sp.csr_matrix = field(repr=False, default=None)   # (n_faces, n_vertices)
    grad_y: sp.csr_matrix = field(repr=False, default=None)
    vertex_face_counts: np.ndarray = field(repr=False, default=None)
    _avg_faces_to_vertices: sp.csr_matrix = field(repr=False, default=None)
    _avg_vertices_to_faces: sp.csr_matrix = field(repr=False, default=None)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def one_ring(self, vertex):
        """Indices of the faces incident to a vertex (test/diagnostic helper)."""
        return np.nonzero((self.faces == vertex).any(axis=1))[0]


def build_grid_mesh(height, width):
    """Build the standard triangulated grid for an image of height x width pixels."""
    if height < 2 or width < 2:
        raise InvalidDimensionError(f"grid needs height, width >= 2, got {height} x {width}")
    h, w = int(height), int(width)

    jj, ii = np.meshgrid(np.arange(w + 1), np.arange(h + 1))
    vertices = np.stack([jj.ravel(), ii.ravel()], axis=1).astype(np.float64)

    def vid(i, j):
        return i * (w + 1) + j

    ci, cj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ci, cj = ci.ravel(), cj.ravel()
    a = vid(ci, cj)          # top-left corner of the cell
    b = vid(ci, cj + 1)      # top-right
    c = vid(ci + 1, cj)      # bottom-left
    d = vid(ci + 1, cj + 1)  # bottom-right
    lower = np.stack([a, b, c], axis=1)
    upper = np.stack([b, d, c], axis=1)
    faces = np.empty((2 * h * w, 3), dtype=np.int64)
    faces[0::2] = lower
    faces[1::2] = upper

    boundary = (ii.ravel() == 0) | (ii.ravel() == h) | (jj.ravel() == 0) | (jj.ravel() == w)

    mesh = TriMesh(height=h, width=w, vertices=vertices, faces=faces, boundary=boundary)
    _attach_operators(mesh)
    return mesh


def _attach_operators(mesh):
    """Precompute face areas, P1 gradient operators, and averaging matrices."""
    v, f = mesh.vertices, mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    double_area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(double_area <= _AREA_EPS):
        bad = int(np.argmax(double_area <= _AREA_EPS))
        raise DegenerateMeshError(f"face {bad} has non-positive area")
    mesh.face_areas = 0.5 * double_area

    n_f, n_v = f.shape[0], v.shape[0]
    rows = np.repeat(np.arange(n_f), 3)
    cols = f.ravel()
    # hat-function gradients: grad phi_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / (2A)
    ys = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
    xs = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
    inv = (1.0 / double_area)[:, None]
    mesh.grad_x = sp.csr_matrix(((ys * inv).ravel(), (rows, cols)), shape=(n_f, n_v))
    mesh.grad_y = sp.csr_matrix(((xs * inv).ravel(), (rows, cols)), shape=(n_f, n_v))

    ones = np.ones(3 * n_f)
    incidence = sp.csr_matrix((ones, (cols, rows)), shape=(n_v, n_f))
    counts = np.asarray(incidence.sum(axis=1)).ravel()
    mesh.vertex_face_counts = counts
    mesh._avg_faces_to_vertices = sp.diags(1.0 / counts) @ incidence
    mesh._avg_vertices_to_faces = sp.csr_matrix(
        (np.full(3 * n_f, 1.0 / 3.0), (rows, cols)), shape=(n_f, n_v)
    )


def signed_areas(mesh, positions):
    """Signed areas of the faces with vertices moved to `positions` ((n_vertices, 2))."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (mesh.n_vertices, 2):
        raise FieldShapeError(
            f"positions shape {positions.shape} != ({mesh.n_vertices}, 2)"
        )
    f = mesh.faces
    p0, p1, p2 = positions[f[:, 0]], positions[f[:, 1]], positions[f[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(eq=False)
class SparseSPDSystem:
    """Symmetric positive (semi)definite sparse operator."""

    matrix: sp.csr_matrix

    @property
    def dimension(self):
        return self.matrix.shape[0]


def cotangent_laplacian(mesh):
    """Cotangent Laplacian of the mesh, stored negated (as -Delta, PSD).

    Row i applies sum_j w_ij (f(v_i) - f(v_j)) with w_ij = (cot a_ij + cot b_ij)/2
    over the angles opposite edge (i, j); boundary edges have one opposite angle.
    """
    v, f = mesh.vertices, mesh.faces
    n_v = mesh.n_vertices
    I, J, S = [], [], []
    for k in range(3):
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        o = f[:, k]
        e1 = v[i] - v[o]
        e2 = v[j] - v[o]
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(np.abs(cross) <= _AREA_EPS):
            bad = int(np.argmax(np.abs(cross) <= _AREA_EPS))
            raise DegenerateMeshError(f"face {bad} is degenerate")
        cot = (e1 * e2).sum(axis=1) / np.abs(cross)
        half = 0.5 * cot
        I.extend([i, j, i, j])
        J.extend([j, i, i, j])
        S.extend([-half, -half, half, half])
    L = sp.csr_matrix(
        (np.concatenate(S), (np.concatenate(I), np.concatenate(J))), shape=(n_v, n_v)
    )
    return SparseSPDSystem(matrix=L)


def face_to_vertex(mesh, values):
    """Average a per-face field onto vertices (mean over incident faces)."""
    values = np.asarray(values)
    if values.shape[0] != mesh.n_faces:
        raise FieldShapeError(f"expected {mesh.n_faces} face values, got {values.shape[0]}")
    return mesh._avg_faces_to_vertices @ values


def vertex_to_face(mesh, values):
    """Average a per-vertex field onto faces (mean of the 3 corners)."""
    values = np.asarray(values)
    if values.shape[0] != mesh.n_vertices:
        raise FieldShapeError(f"expected {mesh.n_vertices} vertex values, got {values.shape[0]}")
    return mesh._avg_vertices_to_faces @ values
