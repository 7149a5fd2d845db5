"""Image sampling, warping, and intensity-driven forces.

Images are 2D float arrays in [0, 1]; pixel (r, c) sits at coordinate
(x, y) = (c, r). Sampling is bilinear with clamping at the image rectangle,
so the identity warp reproduces an image bit-exactly at pixel centers.
"""

import numpy as np

from .errors import FieldShapeError
from .fidelity import gaussian_smooth_field

_DENOM_TOL = 1e-12


def sample_image(image, points):
    """Bilinear samples of an image at (x, y) points, clamped to the rectangle."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    pts = np.asarray(points, dtype=np.float64)
    x = np.clip(pts[..., 0], 0.0, w - 1.0)
    y = np.clip(pts[..., 1], 0.0, h - 1.0)
    ix = np.minimum(x.astype(np.int64), w - 2)
    iy = np.minimum(y.astype(np.int64), h - 2)
    fx = x - ix
    fy = y - iy
    v00 = image[iy, ix]
    v01 = image[iy, ix + 1]
    v10 = image[iy + 1, ix]
    v11 = image[iy + 1, ix + 1]
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)


def warp_image(qcmap, static):
    """Pull the static image back through the map: out(p) = static(f(p))."""
    mesh = qcmap.mesh
    static = np.asarray(static, dtype=np.float64)
    if static.shape != (mesh.height, mesh.width):
        raise FieldShapeError(f"static shape {static.shape} != mesh image size")
    pos = qcmap.positions.reshape(mesh.height + 1, mesh.width + 1, 2)
    return sample_image(static, pos[: mesh.height, : mesh.width])


def image_gradient(image):
    """(d/dx, d/dy) by central differences, one-sided at the borders."""
    gy, gx = np.gradient(np.asarray(image, dtype=np.float64))
    return gx, gy


def _to_vertex_grid(image, mesh):
    """Pixel array extended to the (h+1) x (w+1) vertex grid by edge clamping."""
    out = np.empty((mesh.height + 1, mesh.width + 1))
    out[: mesh.height, : mesh.width] = image
    out[mesh.height, : mesh.width] = image[-1]
    out[:, mesh.width] = out[:, mesh.width - 1]
    return out


def intensity_descent(moving, static, qcmap):
    """Per-vertex descent of the intensity mismatch sum (I_M - I_S(f))^2.

    Returns +2 (I_M - I_S(f)) grad I_S evaluated at the mapped positions, the
    direction that decreases the mismatch when added to the map.
    """
    mesh = qcmap.mesh
    moving = np.asarray(moving, dtype=np.float64)
    static = np.asarray(static, dtype=np.float64)
    if moving.shape != (mesh.height, mesh.width) or static.shape != (mesh.height, mesh.width):
        raise FieldShapeError("images do not match the mesh")
    im_v = _to_vertex_grid(moving, mesh).ravel()
    warped_v = sample_image(static, qcmap.positions)
    gx, gy = image_gradient(static)
    gxs = sample_image(gx, qcmap.positions)
    gys = sample_image(gy, qcmap.positions)
    resid = 2.0 * (im_v - warped_v)
    return np.stack([resid * gxs, resid * gys], axis=1)


def demon_force(moving, warped, alpha=1.0):
    """Symmetric demon force field between two same-shape intensity grids.

    u = dI grad(warped) / (|grad warped|^2 + alpha^2 dI^2)
      + dI grad(moving) / (|grad moving|^2 + alpha^2 dI^2), with dI = moving -
    warped; each term is zeroed where its denominator falls below 1e-12.
    Pointwise |u| <= 1/alpha. Returns an (..., 2) array of (x, y) components.
    """
    moving = np.asarray(moving, dtype=np.float64)
    warped = np.asarray(warped, dtype=np.float64)
    if moving.shape != warped.shape:
        raise FieldShapeError(f"shape mismatch {moving.shape} vs {warped.shape}")
    di = moving - warped
    out = np.zeros(moving.shape + (2,))
    for img in (warped, moving):
        gx, gy = image_gradient(img)
        den = gx * gx + gy * gy + alpha * alpha * di * di
        ok = den >= _DENOM_TOL
        scale = np.where(ok, di / np.where(ok, den, 1.0), 0.0)
        out[..., 0] += scale * gx
        out[..., 1] += scale * gy
    return out


def demons_refine_step(moving, static, qcmap, alpha=1.0, image_side=None):
    """One smoothed demons update for the current map, per vertex.

    Compares the moving image against warp_image(qcmap, static) on the vertex
    grid and returns gaussian_smooth_field(demon_force(...)) flattened to
    (n_vertices, 2).
    """
    mesh = qcmap.mesh
    if image_side is None:
        image_side = max(mesh.height, mesh.width)
    im_v = _to_vertex_grid(np.asarray(moving, dtype=np.float64), mesh)
    warped_v = sample_image(np.asarray(static, dtype=np.float64), qcmap.positions)
    warped_v = warped_v.reshape(mesh.height + 1, mesh.width + 1)
    force = demon_force(im_v, warped_v, alpha)
    return gaussian_smooth_field(force, image_side).reshape(-1, 2)


def histogram_match(source, reference, levels=256):
    """Quantile-map the source intensities onto the reference histogram.

    Midpoint-CDF convention: a constant source lands on the reference median
    level, and matching an image to itself moves no pixel by more than one
    level (1/255).
    """
    source = np.asarray(source, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    top = levels - 1
    src_lv = np.clip(np.floor(source * top + 0.5), 0, top).astype(np.int64)
    ref_lv = np.clip(np.floor(reference * top + 0.5), 0, top).astype(np.int64)
    h_s = np.bincount(src_lv.ravel(), minlength=levels) / src_lv.size
    h_r = np.bincount(ref_lv.ravel(), minlength=levels) / ref_lv.size
    cdf_s = np.cumsum(h_s)
    cdf_r = np.cumsum(h_r)
    q = cdf_s - 0.5 * h_s
    mapped = np.clip(np.searchsorted(cdf_r, q, side="left"), 0, top)
    return mapped[src_lv] / float(top)
