"""On-disk formats: camera text files, PFM depth maps, PLY clouds, PPM/PGM images."""

from __future__ import annotations

import os
import re
from pathlib import Path
from typing import Optional

import numpy as np

from ..geometry import Camera


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# -- camera files -----------------------------------------------------------------
#
#   extrinsic
#   r11 r12 r13 t1
#   r21 r22 r23 t2
#   r31 r32 r33 t3
#   0 0 0 1
#
#   intrinsic
#   fx 0 cx
#   0 fy cy
#   0 0 1
#
#   d_min interval D d_max

def _row(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def write_cam(path, cam: Camera):
    E = np.eye(4)
    E[:3, :3] = cam.R
    E[:3, 3] = cam.t
    lines = ["extrinsic"] + [_row(r) for r in E] + ["", "intrinsic"] + [_row(r) for r in cam.K]
    lines += ["", f"{cam.depth_min:.17g} {cam.depth_interval:.17g} {cam.depth_num:d} "
                  f"{cam.depth_max:.17g}"]
    Path(path).write_text("\n".join(lines) + "\n")


def _numbers(lines, start, rows, cols, section, path):
    out = []
    for r in range(rows):
        idx = start + r
        if idx >= len(lines):
            raise FormatError(f"{path}: line {idx + 1}: missing row {r + 1} of '{section}'")
        parts = lines[idx].split()
        if len(parts) != cols:
            raise FormatError(f"{path}: line {idx + 1}: expected {cols} numbers in "
                              f"'{section}', got {len(parts)}")
        try:
            out.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}: line {idx + 1}: {exc}") from None
    return np.array(out)


def read_cam(path) -> Camera:
    raw = Path(path).read_text().splitlines()
    # keep original line numbers for error messages, skip blank lines when scanning
    lines = [ln.strip() for ln in raw]
    try:
        ei = lines.index("extrinsic")
    except ValueError:
        raise FormatError(f"{path}: missing 'extrinsic' section") from None
    E = _numbers(lines, ei + 1, 4, 4, "extrinsic", path)
    try:
        ii = lines.index("intrinsic", ei + 5)
    except ValueError:
        raise FormatError(f"{path}: missing 'intrinsic' section") from None
    K = _numbers(lines, ii + 1, 3, 3, "intrinsic", path)
    rest = [(n, ln) for n, ln in enumerate(lines[ii + 4:], start=ii + 4) if ln]
    if not rest:
        raise FormatError(f"{path}: missing depth range line 'd_min interval D d_max'")
    n, ln = rest[0]
    parts = ln.split()
    if len(parts) != 4:
        raise FormatError(f"{path}: line {n + 1}: expected 'd_min interval D d_max', got {ln!r}")
    try:
        d_min, interval, d_max = float(parts[0]), float(parts[1]), float(parts[3])
        count = int(float(parts[2]))
    except ValueError as exc:
        raise FormatError(f"{path}: line {n + 1}: {exc}") from None
    try:
        return Camera(K, E[:3, :3], E[:3, 3], d_min, d_max, count, interval)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- PFM ------------------------------------------------------------------------

def write_pfm(path, depth: np.ndarray, mask: Optional[np.ndarray] = None, byteorder: str = "<"):
    """Grayscale little-endian PFM; rows are stored bottom to top.

    Pixels where ``mask`` is false are written as 0. Big-endian output
    (``byteorder=">"``) is refused; the reader accepts both.
    """
    if byteorder != "<":
        raise ValueError("only little-endian PFM output is supported")
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise ValueError(f"PFM writer takes a 2-D map, got shape {depth.shape}")
    data = depth.astype("<f4")
    if mask is not None:
        data = np.where(np.asarray(mask, dtype=bool), data, np.float32(0)).astype("<f4")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(data).tobytes())


def _read_token_line(f) -> str:
    line = f.readline()
    while line.startswith(b"#"):
        line = f.readline()
    return line.decode("ascii").strip()


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = _read_token_line(f)
        if header == "PF":
            raise FormatError(f"{path}: colour PFM ('PF') is not a depth map")
        if header != "Pf":
            raise FormatError(f"{path}: not a PFM file (header {header!r})")
        dims = _read_token_line(f).split()
        if len(dims) != 2:
            raise FormatError(f"{path}: bad dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(_read_token_line(f))
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(), dtype=dtype)
    if data.size != w * h:
        raise FormatError(f"{path}: expected {w * h} values, found {data.size}")
    return np.flipud(data.reshape(h, w)).astype(np.float32)


# -- PLY ------------------------------------------------------------------------

def write_ply(path, points: np.ndarray, colors: Optional[np.ndarray] = None):
    """Binary little-endian PLY with float32 x, y, z and uchar red, green, blue.

    ``points`` may also be a fused cloud carrying ``points`` and ``colors``.
    """
    if hasattr(points, "points"):
        colors = points.colors if colors is None else colors
        points = points.points
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    if colors is None:
        colors = np.zeros((n, 3), dtype=np.uint8)
    colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
    if colors.shape[0] != n:
        raise ValueError("points and colors differ in length")
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"element vertex {n}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property uchar red\nproperty uchar green\nproperty uchar blue\n"
              "end_header\n")
    rec = np.empty(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                             ("r", "u1"), ("g", "u1"), ("b", "u1")])
    rec["x"], rec["y"], rec["z"] = points[:, 0], points[:, 1], points[:, 2]
    rec["r"], rec["g"], rec["b"] = colors[:, 0], colors[:, 1], colors[:, 2]
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


_PLY_TYPES = {"float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
              "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
              "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
              "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4"}


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Read vertices (and colours if present) from a binary PLY file."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise FormatError(f"{path}: not a PLY file")
        fmt = None
        count = None
        props = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise FormatError(f"{path}: header has no end_header")
            tok = line.decode("ascii").split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    count = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                if tok[1] == "list":
                    raise FormatError(f"{path}: list properties on vertices are not supported")
                props.append((tok[2], _PLY_TYPES[tok[1]]))
            elif tok[0] == "end_header":
                break
        if fmt not in ("binary_little_endian", "binary_big_endian"):
            raise FormatError(f"{path}: unsupported PLY format {fmt!r}")
        if count is None:
            raise FormatError(f"{path}: no vertex element")
        order = "<" if fmt == "binary_little_endian" else ">"
        dtype = np.dtype([(name, order + t) for name, t in props])
        rec = np.frombuffer(f.read(dtype.itemsize * count), dtype=dtype, count=count)
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    names = rec.dtype.names
    if all(c in names for c in ("red", "green", "blue")):
        cols = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.uint8)
    else:
        cols = np.zeros((count, 3), dtype=np.uint8)
    return pts, cols


# -- PPM / PGM ------------------------------------------------------------------

def write_ppm(path, image: np.ndarray):
    """Binary P6 from ``uint8[H, W, 3]``."""
    image = np.asarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def write_pgm(path, image: np.ndarray):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def _read_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    # header: magic, width, height, maxval separated by whitespace; comments start with '#'
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)").match(raw, pos)
        if m is None:
            raise FormatError(f"{path}: truncated header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} header, got {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit images are supported")
    pos += 1  # single whitespace byte after maxval
    n = w * h * channels
    body = raw[pos:pos + n]
    if len(body) != n:
        raise FormatError(f"{path}: expected {n} bytes of pixel data, found {len(body)}")
    img = np.frombuffer(body, dtype=np.uint8)
    return img.reshape(h, w, channels) if channels > 1 else img.reshape(h, w)


def read_ppm(path) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p


__all__ = [
    "FormatError",
    "read_cam",
    "read_pfm",
    "read_pgm",
    "read_ply",
    "read_ppm",
    "write_cam",
    "write_pfm",
    "write_pgm",
    "write_ply",
    "write_ppm",
]
