"""Synthetic image pairs shipped for demos and the acceptance suite.

All generators return (moving, static) float64 images in [0, 1] with smooth
(few-pixel) edges so intensity forces are well defined.
"""

import numpy as np


def _coords(size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return x, y


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _disk(size, cx, cy, radius, soft=2.0):
    x, y = _coords(size)
    d = np.hypot(x - cx, y - cy)
    return _smoothstep((radius + soft - d) / (2.0 * soft))


def _segment_distance(x, y, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = np.clip(((x - ax) * vx + (y - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
    return np.hypot(x - (ax + t * vx), y - (ay + t * vy))


def _capsule(size, a, b, halfwidth, soft=2.0):
    x, y = _coords(size)
    d = _segment_distance(x, y, a[0], a[1], b[0], b[1])
    return _smoothstep((halfwidth + soft - d) / (2.0 * soft))


def translated_blob(size=128):
    """White disk displaced horizontally by a quarter of the image width."""
    c = size / 2.0
    shift = size / 4.0
    radius = 0.22 * size
    moving = _disk(size, c - shift / 2.0, c, radius)
    static = _disk(size, c + shift / 2.0, c, radius)
    return moving, static


def bent_bar(size=128):
    """Straight vertical bar versus the same bar with its top half bent."""
    cx = size / 2.0
    top, mid, bot = 0.18 * size, 0.50 * size, 0.82 * size
    half = 0.07 * size
    moving = _capsule(size, (cx, top), (cx, bot), half)
    angle = np.deg2rad(38.0)
    length = mid - top
    tip = (cx + np.sin(angle) * length, mid - np.cos(angle) * length)
    lower = _capsule(size, (cx, mid), (cx, bot), half)
    upper = _capsule(size, (cx, mid), tip, half)
    static = np.maximum(lower, upper)
    return moving, static


def warped_disk(size=128):
    """Disk versus an area-comparable ellipse at the same center."""
    c = size / 2.0
    radius = 0.23 * size
    moving = _disk(size, c, c, radius)
    x, y = _coords(size)
    d = np.hypot((x - c) / 1.35, (y - c) / 0.78)
    static = _smoothstep((radius + 2.0 - d) / 4.0)
    return moving, static


SHIPPED_PAIRS = {
    "translated_blob": translated_blob,
    "bent_bar": bent_bar,
    "warped_disk": warped_disk,
}
