"""Beltrami coefficients of piecewise-linear maps.

A map is stored as per-vertex target positions over a TriMesh. On each face the
map is affine, so its Wirtinger derivatives f_z and f_zbar are constant there
and the Beltrami coefficient is the per-face quotient mu = f_zbar / f_z. The
map is orientation preserving on a face exactly when |mu| < 1 there.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    FieldShapeError,
    NonQuasiconformalError,
    SingularFaceError,
)

_SINGULAR_TOL = 1e-12


@dataclass(eq=False)
class QCMap:
    """Piecewise-linear map: one target position per mesh vertex."""

    mesh: object
    positions: np.ndarray  # (n_vertices, 2) float64

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if self.positions.shape != (self.mesh.n_vertices, 2):
            raise FieldShapeError(
                f"positions shape {self.positions.shape} != ({self.mesh.n_vertices}, 2)"
            )

    def copy(self):
        return QCMap(mesh=self.mesh, positions=self.positions.copy())


def identity_map(mesh):
    """The identity map on the mesh."""
    return QCMap(mesh=mesh, positions=mesh.vertices.copy())


def _wirtinger(mesh, positions):
    """Per-face (f_z, f_zbar) of the PL map given per-vertex positions."""
    z = positions[:, 0] + 1j * positions[:, 1]
    fx = mesh.grad_x @ z
    fy = mesh.grad_y @ z
    fz = 0.5 * (fx - 1j * fy)
    fzbar = 0.5 * (fx + 1j * fy)
    return fz, fzbar


def compute_mu(qcmap):
    """Per-face Beltrami coefficient of a map.

    Raises SingularFaceError where the derivative denominator (2 f_z) has
    modulus below 1e-12.
    """
    fz, fzbar = _wirtinger(qcmap.mesh, qcmap.positions)
    den = 2.0 * fz
    bad = np.abs(den) < _SINGULAR_TOL
    if np.any(bad):
        raise SingularFaceError(int(np.argmax(bad)))
    return fzbar / fz


def maximal_dilation(mu):
    """K = (1 + ||mu||_inf) / (1 - ||mu||_inf); requires sup |mu| < 1."""
    mu = np.asarray(mu)
    sup = float(np.max(np.abs(mu))) if mu.size else 0.0
    if sup >= 1.0:
        raise NonQuasiconformalError(f"sup |mu| = {sup} >= 1")
    return (1.0 + sup) / (1.0 - sup)


def truncate_mu(mu, bound=0.95):
    """Clamp the modulus of each entry to `bound`, preserving the argument."""
    if not 0.0 < bound < 1.0:
        raise ValueError(f"bound must lie in (0, 1), got {bound}")
    mu = np.asarray(mu, dtype=np.complex128)
    mod = np.abs(mu)
    out = mu.copy()
    over = mod > bound
    if np.any(over):
        out[over] = mu[over] * (bound / mod[over])
    return out


def interpolate_map(qcmap, points):
    """Evaluate the PL map at arbitrary domain points ((k, 2) array of (x, y)).

    Points are clamped to the mesh rectangle; interpolation is barycentric in
    the triangle containing each point, consistent with the cell diagonal.
    """
    mesh = qcmap.mesh
    pos = qcmap.positions
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x = np.clip(pts[:, 0], 0.0, float(mesh.width))
    y = np.clip(pts[:, 1], 0.0, float(mesh.height))
    j = np.clip(np.floor(x).astype(np.int64), 0, mesh.width - 1)
    i = np.clip(np.floor(y).astype(np.int64), 0, mesh.height - 1)
    fx = x - j
    fy = y - i

    w1 = mesh.width + 1

    def vid(ii, jj):
        return ii * w1 + jj

    pa = pos[vid(i, j)]
    pb = pos[vid(i, j + 1)]
    pc = pos[vid(i + 1, j)]
    pd = pos[vid(i + 1, j + 1)]

    lower = fx + fy <= 1.0
    out = np.empty_like(pts)
    lx, ly = fx[lower, None], fy[lower, None]
    out[lower] = (1.0 - lx - ly) * pa[lower] + lx * pb[lower] + ly * pc[lower]
    ux, uy = fx[~lower, None], fy[~lower, None]
    out[~lower] = (
        (1.0 - uy) * pb[~lower] + (ux + uy - 1.0) * pd[~lower] + (1.0 - ux) * pc[~lower]
    )
    return out
