"""Patch partitioning, feature banks, and the correlation-matrix pipeline.

An image is divided into p x p rectangular patches (the last row/column
absorbs any remainder), each summarized by a fixed-length descriptor. Two
banks produce a raw cosine matrix that is then row-normalized, has duplicate
(background) rows eliminated, and is finally sparsified to per-row maxima
capped at a global top-k. Pipeline order is enforced through stage tags.

Feature banks serialize as QCF1: magic "QCF1", u32 LE patch count m, u32 LE
descriptor length d, then m*d float32 LE values vector-major. Exact length;
trailing bytes are rejected.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    FormatError,
    InvalidDimensionError,
    PartitionError,
    StageError,
    ZeroVectorError,
)

_QCF_MAGIC = b"QCF1"
_RESAMPLE = 16
_HOG_CELLS = 4
_HOG_BINS = 8
_EPS = 1e-8
_DUP_TOL = 1e-6
_CONST_TOL = 1e-12


@dataclass(eq=False)
class PatchGrid:
    """p x p patch rectangles over an image, row-major patch order."""

    p: int
    height: int
    width: int
    rows: np.ndarray     # (m, 2) [row0, row1) pixel bounds
    cols: np.ndarray     # (m, 2) [col0, col1)
    centers: np.ndarray  # (m, 2) patch centroids in (x, y) pixel coordinates

    @property
    def m(self):
        return self.p * self.p

    @property
    def spacing(self):
        """Mean center-to-center pitch in pixels (the patch length unit)."""
        return 0.5 * (self.height / self.p + self.width / self.p)


def partition_patches(image, p):
    """Partition an image into p x p patches with centroid centers."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    p = int(p)
    if p < 2:
        raise PartitionError(f"patches per side must be >= 2, got {p}")
    if h < p or w < p:
        raise PartitionError(f"image {h} x {w} too small for {p} x {p} patches")
    bh, bw = h // p, w // p
    r0 = np.arange(p) * bh
    r1 = np.append(r0[1:], h)
    c0 = np.arange(p) * bw
    c1 = np.append(c0[1:], w)
    pi, pj = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    pi, pj = pi.ravel(), pj.ravel()
    rows = np.stack([r0[pi], r1[pi]], axis=1)
    cols = np.stack([c0[pj], c1[pj]], axis=1)
    centers = np.stack(
        [(cols[:, 0] + cols[:, 1] - 1) / 2.0, (rows[:, 0] + rows[:, 1] - 1) / 2.0],
        axis=1,
    )
    return PatchGrid(p=p, height=h, width=w, rows=rows, cols=cols, centers=centers)


@dataclass(eq=False)
class FeatureBank:
    """One descriptor vector per patch."""

    vectors: np.ndarray  # (m, d) float64

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))

    @property
    def m(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]


def _resample_patch(image, r0, r1, c0, c1):
    """Bilinearly resample a patch onto the 16 x 16 descriptor window."""
    ph, pw = r1 - r0, c1 - c0
    t = np.arange(_RESAMPLE, dtype=np.float64)
    ys = r0 + (t * (ph - 1) / (_RESAMPLE - 1) if ph > 1 else np.zeros(_RESAMPLE))
    xs = c0 + (t * (pw - 1) / (_RESAMPLE - 1) if pw > 1 else np.zeros(_RESAMPLE))
    iy = np.minimum(ys.astype(np.int64), image.shape[0] - 2)
    ix = np.minimum(xs.astype(np.int64), image.shape[1] - 2)
    iy = np.maximum(iy, 0)
    ix = np.maximum(ix, 0)
    fy = (ys - iy)[:, None]
    fx = (xs - ix)[None, :]
    v00 = image[np.ix_(iy, ix)]
    v01 = image[np.ix_(iy, np.minimum(ix + 1, image.shape[1] - 1))]
    v10 = image[np.ix_(np.minimum(iy + 1, image.shape[0] - 1), ix)]
    v11 = image[np.ix_(np.minimum(iy + 1, image.shape[0] - 1), np.minimum(ix + 1, image.shape[1] - 1))]
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11)


def _raw_descriptor(window):
    vec = window.ravel().copy()
    if np.linalg.norm(vec) < _EPS:
        vec = np.full(vec.shape, _EPS)
    return vec


def _hog_descriptor(window):
    gy, gx = np.gradient(window)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)  # [-pi, pi]
    bins = np.floor((theta + np.pi) / (2 * np.pi) * _HOG_BINS).astype(np.int64) % _HOG_BINS
    cell = _RESAMPLE // _HOG_CELLS
    out = np.empty(_HOG_CELLS * _HOG_CELLS * _HOG_BINS)
    k = 0
    for ci in range(_HOG_CELLS):
        for cj in range(_HOG_CELLS):
            sl = (slice(ci * cell, (ci + 1) * cell), slice(cj * cell, (cj + 1) * cell))
            hist = np.bincount(bins[sl].ravel(), weights=mag[sl].ravel(), minlength=_HOG_BINS)
            hist = hist + _EPS
            out[k : k + _HOG_BINS] = hist / np.linalg.norm(hist)
            k += _HOG_BINS
    return out


_DESCRIPTORS = {"raw": _raw_descriptor, "hog": _hog_descriptor}


def extract_features(image, grid, descriptor="hog"):
    """Extract builtin descriptors for every patch of the grid."""
    if descriptor not in _DESCRIPTORS:
        raise InvalidDimensionError(f"unknown descriptor {descriptor!r}")
    image = np.asarray(image, dtype=np.float64)
    fn = _DESCRIPTORS[descriptor]
    vecs = [
        fn(_resample_patch(image, r0, r1, c0, c1))
        for (r0, r1), (c0, c1) in zip(grid.rows, grid.cols)
    ]
    return FeatureBank(vectors=np.stack(vecs))


def write_features(path, bank):
    """Serialize a feature bank as QCF1."""
    payload = np.ascontiguousarray(bank.vectors, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_QCF_MAGIC)
        fh.write(struct.pack("<II", bank.m, bank.d))
        fh.write(payload)


def load_features(path):
    """Read a QCF1 feature bank, enforcing the exact-length contract."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _QCF_MAGIC:
        raise FormatError("bad QCF1 magic", offset=0)
    if len(blob) < 12:
        raise FormatError("truncated QCF1 header", offset=len(blob))
    m, d = struct.unpack("<II", blob[4:12])
    if m == 0:
        raise FormatError("QCF1 patch count is zero", offset=4)
    if d == 0:
        raise FormatError("QCF1 descriptor length is zero", offset=8)
    expected = 12 + 4 * m * d
    if len(blob) < expected:
        raise FormatError(
            f"truncated QCF1 payload ({len(blob)} of {expected} bytes)", offset=len(blob)
        )
    if len(blob) > expected:
        raise FormatError("trailing bytes after QCF1 payload", offset=expected)
    vecs = np.frombuffer(blob[12:], dtype="<f4").astype(np.float64).reshape(m, d)
    return FeatureBank(vectors=vecs)


@dataclass(eq=False)
class CorrelationMatrix:
    """m x m patch correlation matrix with a pipeline stage tag."""

    values: np.ndarray
    stage: str  # raw -> normalized -> filtered -> sparse

    @property
    def m(self):
        return self.values.shape[0]


def _require_stage(C, stage, op):
    if C.stage != stage:
        raise StageError(f"{op} expects stage {stage!r}, got {C.stage!r}")


def correlation_raw(bank_moving, bank_static):
    """Cosine similarities of unit-normalized descriptor pairs."""
    if bank_moving.d != bank_static.d:
        raise InvalidDimensionError(
            f"descriptor length mismatch: {bank_moving.d} vs {bank_static.d}"
        )
    if bank_moving.m != bank_static.m:
        raise InvalidDimensionError(
            f"patch count mismatch: {bank_moving.m} vs {bank_static.m}"
        )
    for role, bank in (("moving", bank_moving), ("static", bank_static)):
        norms = np.linalg.norm(bank.vectors, axis=1)
        if np.any(norms == 0.0):
            idx = int(np.argmax(norms == 0.0))
            raise ZeroVectorError(idx, f"{role} feature vector {idx} has zero norm")
    a = bank_moving.vectors / np.linalg.norm(bank_moving.vectors, axis=1, keepdims=True)
    b = bank_static.vectors / np.linalg.norm(bank_static.vectors, axis=1, keepdims=True)
    return CorrelationMatrix(values=a @ b.T, stage="raw")


def row_normalize(C):
    """Center and scale each row by its population std; constant rows go to 0."""
    _require_stage(C, "raw", "row_normalize")
    vals = C.values
    mean = vals.mean(axis=1, keepdims=True)
    std = vals.std(axis=1, keepdims=True)
    out = np.zeros_like(vals)
    ok = (std > _CONST_TOL).ravel()
    out[ok] = (vals[ok] - mean[ok]) / std[ok]
    return CorrelationMatrix(values=out, stage="normalized")


def eliminate_background(C):
    """Zero out rows that duplicate another row within 1e-6 per entry."""
    _require_stage(C, "normalized", "eliminate_background")
    vals = C.values
    m = vals.shape[0]
    dup = np.zeros(m, dtype=bool)
    for i in range(m):
        diff = np.max(np.abs(vals - vals[i]), axis=1)
        diff[i] = np.inf
        if np.any(diff <= _DUP_TOL):
            dup[i] = True
    out = vals.copy()
    out[dup] = 0.0
    return CorrelationMatrix(values=out, stage="filtered")


def sparsify(C, k):
    """Keep each row's maximum, then only the k globally largest of those.

    Surviving negatives are clamped to zero, so the result has at most k
    nonzero entries, all nonnegative.
    """
    _require_stage(C, "filtered", "sparsify")
    m = C.values.shape[0]
    if not 1 <= k <= m:
        raise InvalidDimensionError(f"k must lie in [1, {m}], got {k}")
    vals = C.values
    arg = np.argmax(vals, axis=1)
    row_max = vals[np.arange(m), arg]
    keep = np.argsort(-row_max, kind="stable")[:k]
    out = np.zeros_like(vals)
    out[keep, arg[keep]] = np.maximum(row_max[keep], 0.0)
    return CorrelationMatrix(values=out, stage="sparse")


def build_correlation(bank_moving, bank_static, k):
    """Full pipeline: raw cosine -> row normalize -> eliminate -> sparsify."""
    return sparsify(eliminate_background(row_normalize(correlation_raw(bank_moving, bank_static))), k)
