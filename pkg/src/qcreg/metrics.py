"""Registration quality metrics: similarity, smoothness, and fold counting."""

import json
from dataclasses import dataclass

import numpy as np

from .beltrami import interpolate_map
from .errors import DegenerateImageError, InvalidDimensionError
from .intensity import warp_image


def e_sim(moving, static, qcmap):
    """Normalized intensity mismatch between the moving image and the pullback.

    (sum |I_M - I_S(f)| / 2) * (1/sum I_M + 1/sum(1 - I_M)
                                + 1/sum I_S(f) + 1/sum(1 - I_S(f))).
    """
    moving = np.asarray(moving, dtype=np.float64)
    warped = warp_image(qcmap, static)
    n = moving.size
    sums = {
        "sum I_M": float(moving.sum()),
        "sum (1 - I_M)": float(n - moving.sum()),
        "sum I_S(f)": float(warped.sum()),
        "sum (1 - I_S(f))": float(n - warped.sum()),
    }
    for name, value in sums.items():
        if value == 0.0:
            raise DegenerateImageError(name)
    mismatch = 0.5 * float(np.abs(moving - warped).sum())
    return mismatch * sum(1.0 / v for v in sums.values())


def e_smooth(qcmap):
    """(1/(mn)) sqrt(sum |df/dx|^2 + |df/dy|^2) with forward differences."""
    mesh = qcmap.mesh
    h, w = mesh.height, mesh.width
    pos = qcmap.positions.reshape(h + 1, w + 1, 2)
    dx = pos[:h, 1 : w + 1] - pos[:h, :w]
    dy = pos[1 : h + 1, :w] - pos[:h, :w]
    total = float((dx * dx).sum() + (dy * dy).sum())
    return np.sqrt(total) / (h * w)


def e_total(moving, static, qcmap):
    """e_sim + e_smooth."""
    return e_sim(moving, static, qcmap) + e_smooth(qcmap)


def count_flips(qcmap, grid_height=None, grid_width=None):
    """Count flipped triangles on a grid of squares (default: one per pixel).

    Each square splits along the same diagonal as the mesh; a triangle whose
    mapped corners have signed area <= 0 counts as flipped.
    """
    mesh = qcmap.mesh
    gh = mesh.height if grid_height is None else int(grid_height)
    gw = mesh.width if grid_width is None else int(grid_width)
    if gh < 1 or gw < 1:
        raise InvalidDimensionError(f"flip grid must be >= 1 x 1, got {gh} x {gw}")
    if gh == mesh.height and gw == mesh.width:
        corners = qcmap.positions.reshape(gh + 1, gw + 1, 2)
    else:
        xs = np.arange(gw + 1) * (mesh.width / gw)
        ys = np.arange(gh + 1) * (mesh.height / gh)
        xx, yy = np.meshgrid(xs, ys)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        corners = interpolate_map(qcmap, pts).reshape(gh + 1, gw + 1, 2)

    a = corners[:gh, :gw]
    b = corners[:gh, 1:]
    c = corners[1:, :gw]
    d = corners[1:, 1:]

    def area(p, q, r):
        return 0.5 * (
            (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
            - (r[..., 0] - p[..., 0]) * (q[..., 1] - p[..., 1])
        )

    flips = int((area(a, b, c) <= 0.0).sum()) + int((area(b, d, c) <= 0.0).sum())
    return flips


@dataclass
class MetricsReport:
    e_sim: float
    e_smooth: float
    e_total: float
    n_flips: int
    height: int
    width: int

    def to_json(self):
        return json.dumps(
            {
                "e_sim": self.e_sim,
                "e_smooth": self.e_smooth,
                "e_total": self.e_total,
                "n_flips": self.n_flips,
                "height": self.height,
                "width": self.width,
            },
            indent=2,
        )


def compute_metrics(moving, static, qcmap):
    """Bundle all metrics for a registration result."""
    sim = e_sim(moving, static, qcmap)
    smooth = e_smooth(qcmap)
    return MetricsReport(
        e_sim=sim,
        e_smooth=smooth,
        e_total=sim + smooth,
        n_flips=count_flips(qcmap),
        height=qcmap.mesh.height,
        width=qcmap.mesh.width,
    )
