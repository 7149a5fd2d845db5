"""Shared oracles for the test suite.

The central tool is a family of random smooth diffeomorphisms of the image
rectangle built from low-frequency sine modes. Their displacement vanishes
on the boundary and their per-point dilatation coefficient has a closed
form, which gives an independent oracle for the reconstruction round trip.
"""

import numpy as np

from qcreg import QCMap, build_grid_mesh


class SineModeDiffeo:
    """f(x, y) = (x, y) + displacement from 2x2 low-frequency sine modes.

    Displacement components are sums of a_kl sin(k pi x / w) sin(l pi y / h),
    so the boundary stays fixed and all derivatives are analytic.
    """

    def __init__(self, height, width, ax, ay):
        self.height = float(height)
        self.width = float(width)
        self.ax = np.asarray(ax, dtype=np.float64)  # (2, 2) modes for dx
        self.ay = np.asarray(ay, dtype=np.float64)  # (2, 2) modes for dy

    def scaled(self, factor):
        return SineModeDiffeo(self.height, self.width,
                              factor * self.ax, factor * self.ay)

    def _modes(self, x, y):
        s = np.asarray(x, dtype=np.float64) / self.width
        t = np.asarray(y, dtype=np.float64) / self.height
        sins = [np.sin(np.pi * k * s) for k in (1, 2)]
        sint = [np.sin(np.pi * l * t) for l in (1, 2)]
        coss = [np.cos(np.pi * k * s) for k in (1, 2)]
        cost = [np.cos(np.pi * l * t) for l in (1, 2)]
        return sins, sint, coss, cost

    def displacement(self, x, y):
        sins, sint, _, _ = self._modes(x, y)
        dx = sum(self.ax[k, l] * sins[k] * sint[l] for k in range(2) for l in range(2))
        dy = sum(self.ay[k, l] * sins[k] * sint[l] for k in range(2) for l in range(2))
        return dx, dy

    def jacobian(self, x, y):
        """Partials of the displacement: (dx_x, dx_y, dy_x, dy_y)."""
        sins, sint, coss, cost = self._modes(x, y)
        kx = [np.pi * (k + 1) / self.width for k in range(2)]
        ly = [np.pi * (l + 1) / self.height for l in range(2)]
        dxx = sum(self.ax[k, l] * kx[k] * coss[k] * sint[l]
                  for k in range(2) for l in range(2))
        dxy = sum(self.ax[k, l] * sins[k] * ly[l] * cost[l]
                  for k in range(2) for l in range(2))
        dyx = sum(self.ay[k, l] * kx[k] * coss[k] * sint[l]
                  for k in range(2) for l in range(2))
        dyy = sum(self.ay[k, l] * sins[k] * ly[l] * cost[l]
                  for k in range(2) for l in range(2))
        return dxx, dxy, dyx, dyy

    def mu(self, x, y):
        """Exact dilatation coefficient of f at (x, y)."""
        dxx, dxy, dyx, dyy = self.jacobian(x, y)
        ux, uy = 1.0 + dxx, dxy
        vx, vy = dyx, 1.0 + dyy
        fz = 0.5 * ((ux + vy) + 1j * (vx - uy))
        fzbar = 0.5 * ((ux - vy) + 1j * (vx + uy))
        return fzbar / fz

    def sup_mu(self, samples=96):
        xs = np.linspace(0.0, self.width, samples)
        ys = np.linspace(0.0, self.height, samples)
        xx, yy = np.meshgrid(xs, ys)
        return float(np.abs(self.mu(xx, yy)).max())

    def map_on(self, mesh):
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        dx, dy = self.displacement(x, y)
        return QCMap(mesh, np.column_stack([x + dx, y + dy]))

    def mu_on_faces(self, mesh):
        centroids = mesh.vertices[mesh.faces].mean(axis=1)
        return self.mu(centroids[:, 0], centroids[:, 1])


def random_diffeo(rng, height, width, target_sup=0.45):
    """Random sine-mode diffeo scaled so sup |mu| is close to target_sup."""
    base = SineModeDiffeo(height, width,
                          rng.standard_normal((2, 2)),
                          rng.standard_normal((2, 2)))
    lo, hi = 0.0, 1.0
    while base.scaled(hi).sup_mu() < target_sup:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("degenerate random field")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if base.scaled(mid).sup_mu() < target_sup:
            lo = mid
        else:
            hi = mid
    return base.scaled(0.5 * (lo + hi))


def smooth_test_image(rng, height, width, modes=3):
    """Smooth random image in [0.05, 0.95] with nonvanishing gradients."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width))
    for _ in range(modes):
        fx, fy = rng.uniform(0.5, 2.0, size=2)
        px, py = rng.uniform(0.0, 2.0 * np.pi, size=2)
        img += rng.uniform(0.3, 1.0) * np.sin(
            2.0 * np.pi * fx * x / width + px
        ) * np.sin(2.0 * np.pi * fy * y / height + py)
    img -= img.min()
    if img.max() > 0:
        img /= img.max()
    return 0.05 + 0.9 * img


def grid_meshes(*sizes):
    return {s: build_grid_mesh(s, s) for s in sizes}
