"""Patch-correspondence fidelity: energy, descent, and field utilities.

The correspondence matrix D(g)_ij = exp(-||g(x_i) - x_j||^2 / sigma^2) compares
mapped moving-patch centers with static-patch centers. The fidelity energy
sum_ij C_ij^2 (D_ij - 1)^2 is minimized along its exact negative gradient with
respect to the mapped centers; the per-patch vectors are rasterized onto mesh
vertices piecewise-constantly and Gaussian smoothed before being converted to
a Beltrami increment elsewhere.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .beltrami import interpolate_map
from .errors import FieldShapeError

_ZERO_TOL = 1e-12


@dataclass(eq=False)
class CorrespondenceState:
    """Mapped moving centers, static centers, and the Gaussian width in pixels."""

    mapped: np.ndarray   # (m, 2) current g(x_i)
    static: np.ndarray   # (m, 2) target centers x_j
    sigma_px: float

    def __post_init__(self):
        self.mapped = np.asarray(self.mapped, dtype=np.float64)
        self.static = np.asarray(self.static, dtype=np.float64)
        if self.mapped.shape != self.static.shape or self.mapped.ndim != 2:
            raise FieldShapeError(
                f"center shapes {self.mapped.shape} vs {self.static.shape}"
            )
        if self.sigma_px <= 0:
            raise FieldShapeError(f"sigma must be positive, got {self.sigma_px}")


def make_correspondence_state(qcmap, moving_centers, static_centers, sigma_px):
    """Map the moving centers through the current map and bundle the state."""
    mapped = interpolate_map(qcmap, moving_centers)
    return CorrespondenceState(mapped=mapped, static=static_centers, sigma_px=sigma_px)


def correspondence_matrix(state):
    """D_ij = exp(-||g(x_i) - x_j||^2 / sigma^2), entries in (0, 1]."""
    diff = state.mapped[:, None, :] - state.static[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    return np.exp(-d2 / (state.sigma_px * state.sigma_px))


def _cvalues(C):
    return C.values if hasattr(C, "values") else np.asarray(C, dtype=np.float64)


def fidelity_energy(C, D):
    """sum_ij C_ij^2 (D_ij - 1)^2."""
    c = _cvalues(C)
    return float(np.sum(c * c * (D - 1.0) ** 2))


def fidelity_descent(C, state):
    """Negative gradient of the fidelity energy w.r.t. the mapped centers.

    df(x_i) = (4/sigma^2) sum_j C_ij^2 (D_ij - 1) D_ij (g(x_i) - x_j); adding it
    with a positive step decreases the energy (it points toward the targets).
    """
    c = _cvalues(C)
    D = correspondence_matrix(state)
    W = c * c * (D - 1.0) * D
    s = W.sum(axis=1, keepdims=True)
    pulled = W @ state.static
    return (4.0 / (state.sigma_px**2)) * (s * state.mapped - pulled)


def rasterize_descent(df, grid, mesh):
    """Spread per-patch vectors onto mesh vertices, constant per patch."""
    df = np.asarray(df, dtype=np.float64)
    if df.shape != (grid.m, 2):
        raise FieldShapeError(f"descent shape {df.shape} != ({grid.m}, 2)")
    if (mesh.height, mesh.width) != (grid.height, grid.width):
        raise FieldShapeError("mesh and patch grid cover different images")
    row_starts = np.unique(grid.rows[:, 0])
    col_starts = np.unique(grid.cols[:, 0])
    vi = np.minimum(np.arange(mesh.height + 1), mesh.height - 1)
    vj = np.minimum(np.arange(mesh.width + 1), mesh.width - 1)
    pi = np.searchsorted(row_starts, vi, side="right") - 1
    pj = np.searchsorted(col_starts, vj, side="right") - 1
    patch = (pi[:, None] * grid.p + pj[None, :]).ravel()
    return df[patch]


def gaussian_smooth_field(field, image_side):
    """Separable Gaussian smoothing with std image_side/50, truncated at 3 std.

    The kernel is renormalized against a same-shape field of ones so constants
    are preserved exactly, including at boundaries. `field` is (H, W) or
    (H, W, C); smoothing acts on the two leading axes.
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim not in (2, 3):
        raise FieldShapeError(f"expected a 2D grid field, got shape {field.shape}")
    sigma = image_side / 50.0
    radius = max(1, int(np.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(t * t) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = field
    for axis in (0, 1):
        ones = np.ones(out.shape[axis])
        norm = convolve1d(ones, kernel, mode="constant", cval=0.0)
        shape = [1, 1] + ([1] if out.ndim == 3 else [])
        shape[axis] = out.shape[axis]
        out = convolve1d(out, kernel, axis=axis, mode="constant", cval=0.0) / norm.reshape(shape)
    return out
