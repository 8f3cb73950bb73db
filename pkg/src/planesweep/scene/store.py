"""Scene directories.

Layout (indices zero-based, zero-padded to 8 digits)::

    images/00000000.ppm
    cams/00000000_cam.txt
    depths/00000000.pfm      optional ground truth
    masks/00000000.pgm       optional, 255 = valid
    tracks.txt               one line per track: x y z k id_1 .. id_k
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..geometry import SparseTrack
from .formats import (
    FormatError,
    ensure_dir,
    read_cam,
    read_pfm,
    read_pgm,
    read_ppm,
    write_cam,
    write_pfm,
    write_pgm,
    write_ppm,
)
from .synth import SceneBundle


def view_name(i: int) -> str:
    return f"{i:08d}"


def save_scene_dir(path, bundle: SceneBundle):
    root = ensure_dir(path)
    for sub in ("images", "cams"):
        ensure_dir(root / sub)
    if bundle.has_ground_truth:
        ensure_dir(root / "depths")
        ensure_dir(root / "masks")
    for i, (img, cam) in enumerate(zip(bundle.images, bundle.cameras)):
        write_ppm(root / "images" / f"{view_name(i)}.ppm", img)
        write_cam(root / "cams" / f"{view_name(i)}_cam.txt", cam)
        if bundle.has_ground_truth:
            write_pfm(root / "depths" / f"{view_name(i)}.pfm", bundle.depths[i], bundle.masks[i])
            write_pgm(root / "masks" / f"{view_name(i)}.pgm",
                      np.where(bundle.masks[i], 255, 0).astype(np.uint8))
    with open(root / "tracks.txt", "w") as f:
        for tr in bundle.tracks:
            ids = sorted(tr.observing_views)
            x, y, z = (f"{v:.17g}" for v in tr.position)
            f.write(f"{x} {y} {z} {len(ids)} {' '.join(map(str, ids))}\n")


def _indices(folder: Path, pattern: str) -> dict:
    out = {}
    if not folder.is_dir():
        return out
    rx = re.compile(pattern)
    for p in folder.iterdir():
        m = rx.fullmatch(p.name)
        if m:
            out[int(m.group(1))] = p
    return out


def read_tracks(path) -> list:
    tracks = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            k = int(parts[3])
            ids = [int(v) for v in parts[4:]]
            pos = [float(v) for v in parts[:3]]
        except (ValueError, IndexError):
            raise FormatError(f"{path}: line {n}: malformed track") from None
        if len(ids) != k:
            raise FormatError(f"{path}: line {n}: track lists {len(ids)} views, header says {k}")
        tracks.append(SparseTrack(pos, ids))
    return tracks


def load_scene_dir(path) -> SceneBundle:
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"scene directory not found: {root}")
    images = _indices(root / "images", r"(\d{8})\.ppm")
    cams = _indices(root / "cams", r"(\d{8})_cam\.txt")
    if set(images) != set(cams):
        orphans = sorted(set(images) ^ set(cams))
        detail = ", ".join(f"{view_name(i)} ({'image' if i in images else 'camera'} only)"
                           for i in orphans)
        raise FormatError(f"{root}: image/camera count mismatch "
                          f"({len(images)} images, {len(cams)} cameras); orphans: {detail}")
    order = sorted(images)
    if order != list(range(len(order))):
        raise FormatError(f"{root}: view indices must be contiguous from 0, got {order}")
    bundle = SceneBundle([read_ppm(images[i]) for i in order], [read_cam(cams[i]) for i in order])

    depths = _indices(root / "depths", r"(\d{8})\.pfm")
    masks = _indices(root / "masks", r"(\d{8})\.pgm")
    if depths:
        if sorted(depths) != order:
            raise FormatError(f"{root}: depths/ does not cover every view")
        bundle.depths = [read_pfm(depths[i]).astype(np.float64) for i in order]
        if masks:
            if sorted(masks) != order:
                raise FormatError(f"{root}: masks/ does not cover every view")
            bundle.masks = [read_pgm(masks[i]) > 0 for i in order]
        else:
            bundle.masks = [d > 0 for d in bundle.depths]
    if (root / "tracks.txt").is_file():
        bundle.tracks = read_tracks(root / "tracks.txt")
    return bundle
