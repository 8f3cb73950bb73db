from .formats import (
    FormatError,
    read_cam,
    read_pfm,
    read_pgm,
    read_ply,
    read_ppm,
    write_cam,
    write_pfm,
    write_pgm,
    write_ply,
    write_ppm,
)
from .store import load_scene_dir, read_tracks, save_scene_dir, view_name
from .synth import SceneBundle, SceneGeometry, SceneSpec, Sphere, generate_scene, make_cameras

__all__ = [
    "FormatError",
    "SceneBundle",
    "SceneGeometry",
    "SceneSpec",
    "Sphere",
    "generate_scene",
    "load_scene_dir",
    "make_cameras",
    "read_cam",
    "read_pfm",
    "read_pgm",
    "read_ply",
    "read_ppm",
    "read_tracks",
    "save_scene_dir",
    "view_name",
    "write_cam",
    "write_pfm",
    "write_pgm",
    "write_ply",
    "write_ppm",
]
