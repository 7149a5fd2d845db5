"""Linear Beltrami Solver: reconstruct a map from a Beltrami coefficient.

Writing mu = rho + i tau per face, both map components are discrete solutions
of div(A grad u) = 0 where A = [[a1, a2], [a2, a3]] depends algebraically on
mu. The P1 stiffness matrix is assembled per face and solved with Dirichlet
constraints (by default the identity on the whole rectangle boundary).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .beltrami import QCMap
from .errors import (
    FieldShapeError,
    InvalidDimensionError,
    NearSingularError,
    NonQuasiconformalError,
    SolverFailureError,
)

_DENOM_TOL = 1e-6
_RESIDUAL_TOL = 1e-8


@dataclass(eq=False)
class LBSCoefficients:
    """Per-face diffusion coefficients a1, a2, a3 (A is SPD with det 1)."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray


def lbs_coefficients(mu):
    """Diffusion coefficients from a per-face Beltrami coefficient."""
    mu = np.asarray(mu, dtype=np.complex128)
    rho, tau = mu.real, mu.imag
    den = 1.0 - rho * rho - tau * tau
    bad = den < _DENOM_TOL
    if np.any(bad):
        raise NearSingularError(int(np.argmax(bad)))
    a1 = ((rho - 1.0) ** 2 + tau * tau) / den
    a2 = -2.0 * tau / den
    a3 = (1.0 + 2.0 * rho + rho * rho + tau * tau) / den
    return LBSCoefficients(a1=a1, a2=a2, a3=a3)


@dataclass(eq=False)
class BoundaryCondition:
    """Dirichlet constraints: vertex indices pinned to target positions."""

    vertex_indices: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.vertex_indices = np.asarray(self.vertex_indices, dtype=np.int64).ravel()
        self.positions = np.asarray(self.positions, dtype=np.float64)
        k = self.vertex_indices.shape[0]
        if self.positions.shape != (k, 2):
            raise FieldShapeError(
                f"boundary positions shape {self.positions.shape} != ({k}, 2)"
            )
        if k < 3:
            raise InvalidDimensionError("need at least 3 constrained vertices")
        if np.unique(self.vertex_indices).shape[0] != k:
            raise InvalidDimensionError("constrained vertices must be distinct")
        centered = self.positions - self.positions.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise InvalidDimensionError("constrained target positions are collinear")


def identity_boundary(mesh):
    """Pin every rectangle-boundary vertex to its rest position."""
    idx = np.nonzero(mesh.boundary)[0]
    return BoundaryCondition(vertex_indices=idx, positions=mesh.vertices[idx].copy())


def _stiffness(mesh, coeffs):
    """Assemble the P1 stiffness matrix for div(A grad u)."""
    v, f = mesh.vertices, mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    double_area = (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )
    inv = 1.0 / double_area
    # hat gradients (b, c) per corner
    b = np.stack(
        [p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1
    ) * inv[:, None]
    c = np.stack(
        [p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1
    ) * inv[:, None]
    area = 0.5 * double_area

    n_f, n_v = f.shape[0], v.shape[0]
    I = np.empty((n_f, 9), dtype=np.int64)
    J = np.empty((n_f, 9), dtype=np.int64)
    S = np.empty((n_f, 9), dtype=np.float64)
    a1, a2, a3 = coeffs.a1, coeffs.a2, coeffs.a3
    k = 0
    for i in range(3):
        for j in range(3):
            I[:, k] = f[:, i]
            J[:, k] = f[:, j]
            S[:, k] = area * (
                a1 * b[:, i] * b[:, j]
                + a2 * (b[:, i] * c[:, j] + c[:, i] * b[:, j])
                + a3 * c[:, i] * c[:, j]
            )
            k += 1
    return sp.csr_matrix((S.ravel(), (I.ravel(), J.ravel())), shape=(n_v, n_v))


def solve_lbs(mu, mesh, bc=None):
    """Reconstruct the map whose Beltrami coefficient best matches `mu`.

    `mu` is per-face; `bc` defaults to the identity on the rectangle boundary.
    The two components share one sparse factorization (deterministic).
    """
    mu = np.asarray(mu, dtype=np.complex128)
    if mu.shape != (mesh.n_faces,):
        raise FieldShapeError(f"mu shape {mu.shape} != ({mesh.n_faces},)")
    if np.max(np.abs(mu)) >= 1.0:
        raise NonQuasiconformalError(f"sup |mu| = {np.max(np.abs(mu))} >= 1")
    if bc is None:
        bc = identity_boundary(mesh)

    K = _stiffness(mesh, lbs_coefficients(mu))
    n_v = mesh.n_vertices
    con = bc.vertex_indices
    mask = np.zeros(n_v, dtype=bool)
    mask[con] = True
    free = np.nonzero(~mask)[0]

    positions = np.zeros((n_v, 2))
    positions[con] = bc.positions
    if free.size:
        K_ff = K[free][:, free].tocsc()
        rhs = -(K[free][:, con] @ bc.positions)
        try:
            lu = spla.splu(K_ff)
            sol = lu.solve(rhs)
        except RuntimeError as exc:  # singular factorization
            raise SolverFailureError(str(exc)) from exc
        if not np.all(np.isfinite(sol)):
            raise SolverFailureError("non-finite LBS solution")
        resid = np.linalg.norm(K_ff @ sol - rhs)
        scale = max(np.linalg.norm(rhs), 1e-30)
        if resid / scale > _RESIDUAL_TOL:
            raise SolverFailureError(f"relative residual {resid / scale:.3e}")
        positions[free] = sol
    return QCMap(mesh=mesh, positions=positions)
