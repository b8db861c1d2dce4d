"""On-disk formats of the per-pixel label layers and landmark records.

* color, albedo: 8-bit RGB PNG
* mask: 8-bit single-channel PNG of class ids
* depth: 16-bit PNG; code 0 is background, code ``c > 0`` decodes to
  ``offset + (c - 1) * scale`` metres, with ``scale`` and ``offset`` kept
  in PNG text chunks
* normals, uvs, vertex_map: little-endian float32 planes behind a
  24-byte header (magic, version, height, width, channels, layer tag)
* landmarks: one text line per point, ``index x y visible depth``
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

PLANE_MAGIC = b"SFPL"
PLANE_VERSION = 1
_PLANE_HEADER = struct.Struct("<4sIIII4s")
DEPTH_CODES = 65535


class LayerFormatError(ValueError):
    pass


def _to_u8(image):
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_rgb(path, image):
    """Float RGB in [0, 1] (or uint8) to an 8-bit PNG."""
    image = np.asarray(image)
    data = image if image.dtype == np.uint8 else _to_u8(image)
    Image.fromarray(data).save(path, format="PNG")


def read_rgb(path):
    """8-bit PNG to float32 RGB in [0, 1]."""
    with Image.open(path) as im:
        if im.mode != "RGB":
            raise LayerFormatError(f"{path}: expected an RGB image, found mode {im.mode}")
        return np.asarray(im, dtype=np.float32) / 255.0


def write_mask(path, mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise LayerFormatError(f"mask must be 2-D, got shape {mask.shape}")
    Image.fromarray(mask.astype(np.uint8)).save(path, format="PNG")


def read_mask(path):
    with Image.open(path) as im:
        if im.mode != "L":
            raise LayerFormatError(f"{path}: expected an 8-bit single-channel mask, found mode {im.mode}")
        return np.asarray(im, dtype=np.uint8).copy()


def encode_depth(depth):
    """(codes uint16, scale, offset) for a depth map with +inf background."""
    depth = np.asarray(depth, dtype=np.float64)
    finite = np.isfinite(depth)
    if not finite.any():
        return np.zeros(depth.shape, dtype=np.uint16), 1.0, 0.0
    lo, hi = float(depth[finite].min()), float(depth[finite].max())
    scale = (hi - lo) / (DEPTH_CODES - 2) if hi > lo else 1e-6
    codes = np.zeros(depth.shape, dtype=np.uint16)
    codes[finite] = (np.rint((depth[finite] - lo) / scale) + 1).astype(np.uint16)
    return codes, scale, lo


def decode_depth(codes, scale, offset):
    codes = np.asarray(codes)
    out = np.full(codes.shape, np.inf)
    fg = codes > 0
    out[fg] = offset + (codes[fg].astype(np.float64) - 1.0) * scale
    return out


def write_depth(path, depth):
    codes, scale, offset = encode_depth(depth)
    info = PngInfo()
    info.add_text("depth_scale", repr(scale))
    info.add_text("depth_offset", repr(offset))
    info.add_text("depth_units", "m")
    Image.fromarray(codes).save(path, format="PNG", pnginfo=info)


def read_depth(path):
    with Image.open(path) as im:
        try:
            scale = float(im.text["depth_scale"])
            offset = float(im.text["depth_offset"])
        except KeyError as exc:
            raise LayerFormatError(f"{path}: missing depth header field {exc}") from None
        codes = np.asarray(im, dtype=np.uint16)
    return decode_depth(codes, scale, offset)


def write_plane(path, array, tag):
    """Float32 (H, W, C) plane with a small header."""
    array = np.asarray(array, dtype="<f4")
    if array.ndim == 2:
        array = array[..., None]
    tag_bytes = tag.encode("ascii")[:4].ljust(4, b"\x00")
    h, w, c = array.shape
    with open(path, "wb") as fh:
        fh.write(_PLANE_HEADER.pack(PLANE_MAGIC, PLANE_VERSION, h, w, c, tag_bytes))
        fh.write(np.ascontiguousarray(array).tobytes())


def read_plane(path, tag=None):
    data = Path(path).read_bytes()
    if len(data) < _PLANE_HEADER.size:
        raise LayerFormatError(f"{path}: truncated plane header")
    magic, version, h, w, c, raw_tag = _PLANE_HEADER.unpack_from(data)
    if magic != PLANE_MAGIC:
        raise LayerFormatError(f"{path}: not a float plane (bad magic)")
    if version != PLANE_VERSION:
        raise LayerFormatError(f"{path}: unsupported plane version {version}")
    found = raw_tag.rstrip(b"\x00").decode("ascii")
    if tag is not None and found != tag[:4]:
        raise LayerFormatError(f"{path}: expected layer {tag!r}, found {found!r}")
    body = data[_PLANE_HEADER.size:]
    if len(body) != 4 * h * w * c:
        raise LayerFormatError(f"{path}: expected {h}x{w}x{c} floats, found {len(body) // 4}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float32)


def format_landmarks(points, visible=None):
    points = np.asarray(points, dtype=np.float64)
    if visible is None:
        visible = np.ones(len(points), dtype=bool)
    lines = ["# index x y visible depth"]
    for i, (p, v) in enumerate(zip(points, visible)):
        depth = p[2] if len(p) > 2 else float("nan")
        lines.append(f"{i} {float(p[0])!r} {float(p[1])!r} {int(bool(v))} {float(depth)!r}")
    return "\n".join(lines) + "\n"


def parse_landmarks(text, source="<landmarks>"):
    """Returns ``(points (L, 3), visible (L,))``; missing columns default to visible and nan depth."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise LayerFormatError(f"{source}:{lineno}: expected 'index x y [visible [depth]]'")
        try:
            idx = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
            vis = bool(int(parts[3])) if len(parts) > 3 else True
            depth = float(parts[4]) if len(parts) > 4 else float("nan")
        except ValueError:
            raise LayerFormatError(f"{source}:{lineno}: malformed landmark record") from None
        if idx != len(rows):
            raise LayerFormatError(f"{source}:{lineno}: expected index {len(rows)}, found {idx}")
        rows.append((x, y, depth, vis))
    if not rows:
        return np.zeros((0, 3)), np.zeros(0, dtype=bool)
    arr = np.array([r[:3] for r in rows], dtype=np.float64)
    return arr, np.array([r[3] for r in rows], dtype=bool)


def write_landmarks(path, points, visible=None):
    Path(path).write_text(format_landmarks(points, visible))


def read_landmarks(path):
    return parse_landmarks(Path(path).read_text(), str(path))
