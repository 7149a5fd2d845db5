"""File formats: grayscale images, QCM1 map files, QCB1 coefficient files.

Images read as float64 in [0, 1] (8-bit grayscale PNG and binary PGM "P5";
color PNG collapses to luminance; PGM maxval rescales). Maps serialize as
QCM1: magic "QCM1", u32 LE pixel height, u32 LE pixel width, then
(h+1)*(w+1) float32 LE (x, y) pairs vertex row-major. Per-face Beltrami
fields serialize as QCB1: magic "QCB1", u32 LE height, u32 LE width, then
2*h*w float32 LE (re, im) pairs in canonical face order. All three formats
enforce exact payload length and reject trailing bytes.
"""

import struct

import numpy as np
from PIL import Image, UnidentifiedImageError

from .beltrami import QCMap, interpolate_map
from .errors import FormatError, InvalidDimensionError
from .mesh import build_grid_mesh

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_QCM_MAGIC = b"QCM1"
_QCB_MAGIC = b"QCB1"


def read_image(path):
    """Read a grayscale image as float64 in [0, 1]."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] == b"P5":
        return _read_pgm(path)
    if head == _PNG_MAGIC:
        try:
            with Image.open(path) as img:
                img.load()
                if img.mode != "L":
                    img = img.convert("L")
                arr = np.asarray(img, dtype=np.float64)
        except (UnidentifiedImageError, OSError, SyntaxError) as exc:
            raise FormatError(f"unreadable PNG: {exc}") from exc
        return arr / 255.0
    raise FormatError("unsupported image format (need 8-bit PNG or binary PGM)", offset=0)


def _read_pgm(path):
    with open(path, "rb") as fh:
        blob = fh.read()

    pos = 2  # past "P5"
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header", offset=pos)
        try:
            fields.append(int(blob[start:pos]))
        except ValueError as exc:
            raise FormatError(f"bad PGM header field {blob[start:pos]!r}", offset=start) from exc
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"bad PGM dimensions {w} x {h} maxval {maxval}", offset=2)
    bytes_per = 1 if maxval < 256 else 2
    expected = pos + w * h * bytes_per
    if len(blob) < expected:
        raise FormatError(
            f"truncated PGM payload ({len(blob)} of {expected} bytes)", offset=len(blob)
        )
    if len(blob) > expected:
        raise FormatError("trailing bytes after PGM payload", offset=expected)
    dtype = np.uint8 if bytes_per == 1 else ">u2"
    data = np.frombuffer(blob[pos:expected], dtype=dtype).reshape(h, w)
    return data.astype(np.float64) / float(maxval)


def write_image(path, image):
    """Write an image in [0, 1] as 8-bit PNG or PGM by extension (round half up)."""
    image = np.asarray(image, dtype=np.float64)
    levels = np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)
    name = str(path).lower()
    if name.endswith(".pgm"):
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (levels.shape[1], levels.shape[0]))
            fh.write(levels.tobytes())
    elif name.endswith(".png"):
        Image.fromarray(levels, mode="L").save(path, format="PNG")
    else:
        raise FormatError(f"unsupported output image extension for {path}")


def write_map(path, qcmap):
    """Serialize a map as QCM1 (positions stored float32)."""
    mesh = qcmap.mesh
    payload = np.ascontiguousarray(qcmap.positions, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_QCM_MAGIC)
        fh.write(struct.pack("<II", mesh.height, mesh.width))
        fh.write(payload)


def read_map(path):
    """Read a QCM1 map; the grid mesh is rebuilt from the stored pixel size."""
    with open(path, "rb") as fh:
        blob = fh.read()
    h, w, payload = _read_grid_header(blob, _QCM_MAGIC, "QCM1")
    expected = 12 + 8 * (h + 1) * (w + 1)
    _check_length(blob, expected, "QCM1")
    positions = (
        np.frombuffer(blob[12:], dtype="<f4").astype(np.float64).reshape(-1, 2)
    )
    return QCMap(mesh=build_grid_mesh(h, w), positions=positions)


def write_mu(path, mu, height, width):
    """Serialize a per-face Beltrami field as QCB1."""
    mu = np.asarray(mu, dtype=np.complex128)
    if mu.shape != (2 * height * width,):
        raise InvalidDimensionError(
            f"mu has {mu.shape[0]} faces, grid {height} x {width} needs {2 * height * width}"
        )
    pairs = np.empty((mu.shape[0], 2), dtype="<f4")
    pairs[:, 0] = mu.real
    pairs[:, 1] = mu.imag
    with open(path, "wb") as fh:
        fh.write(_QCB_MAGIC)
        fh.write(struct.pack("<II", height, width))
        fh.write(pairs.tobytes())


def read_mu(path):
    """Read a QCB1 per-face Beltrami field -> (mu, height, width)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    h, w, payload = _read_grid_header(blob, _QCB_MAGIC, "QCB1")
    expected = 12 + 8 * 2 * h * w
    _check_length(blob, expected, "QCB1")
    pairs = np.frombuffer(blob[12:], dtype="<f4").astype(np.float64).reshape(-1, 2)
    return pairs[:, 0] + 1j * pairs[:, 1], h, w


def _read_grid_header(blob, magic, name):
    if len(blob) < 4 or blob[:4] != magic:
        raise FormatError(f"bad {name} magic", offset=0)
    if len(blob) < 12:
        raise FormatError(f"truncated {name} header", offset=len(blob))
    h, w = struct.unpack("<II", blob[4:12])
    if h < 2 or w < 2:
        raise FormatError(f"bad {name} grid size {h} x {w}", offset=4)
    return h, w, blob[12:]


def _check_length(blob, expected, name):
    if len(blob) < expected:
        raise FormatError(
            f"truncated {name} payload ({len(blob)} of {expected} bytes)", offset=len(blob)
        )
    if len(blob) > expected:
        raise FormatError(f"trailing bytes after {name} payload", offset=expected)


def render_grid(qcmap, spacing=8):
    """Rasterize the image of coordinate gridlines under the map.

    Black lines on white, same pixel size as the mesh image. Lines run at
    multiples of `spacing` (an integer >= 2), sampled densely and mapped
    point-by-point.
    """
    if int(spacing) != spacing or spacing < 2:
        raise InvalidDimensionError(f"grid spacing must be an integer >= 2, got {spacing}")
    mesh = qcmap.mesh
    h, w = mesh.height, mesh.width
    out = np.ones((h, w))
    step = 0.2
    ts_v = np.arange(0.0, h + step, step)
    ts_h = np.arange(0.0, w + step, step)
    lines = []
    for x in range(0, w + 1, int(spacing)):
        lines.append(np.stack([np.full_like(ts_v, float(x)), ts_v], axis=1))
    for y in range(0, h + 1, int(spacing)):
        lines.append(np.stack([ts_h, np.full_like(ts_h, float(y))], axis=1))
    pts = interpolate_map(qcmap, np.concatenate(lines))
    cols = np.clip(np.round(pts[:, 0]).astype(np.int64), 0, w - 1)
    rows = np.clip(np.round(pts[:, 1]).astype(np.int64), 0, h - 1)
    out[rows, cols] = 0.0
    return out
