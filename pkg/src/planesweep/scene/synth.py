"""Procedural scenes with exact ground truth.

A textured ground plane (z = 0, finite square) carries one to four spheres
and an optional untextured disc. Cameras sit on an arc around a look-at
point. Each pixel is ray cast analytically, so depth is exact to machine
precision and masks mark the first surface hit only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..geometry import Camera, SparseTrack, look_at, project_points, unproject_pixels

BACKGROUND = 0


@dataclass
class Sphere:
    center: tuple
    radius: float


@dataclass
class SceneSpec:
    seed: int = 0
    width: int = 128
    height: int = 96
    num_views: int = 4
    num_spheres: int = 1
    spheres: Optional[list] = None  # explicit Sphere list overrides num_spheres
    plane_half_size: float = 400.0
    textureless_patch: bool = False
    ring_radius: float = 600.0
    elevation_deg: float = 45.0
    azimuth_step_deg: float = 15.0
    look_at: tuple = (0.0, 0.0, 0.0)
    focal_factor: float = 1.6  # focal length in pixels = focal_factor * width
    depth_num: int = 48
    depth_margin: float = 0.03
    texture_period: float = 40.0  # scene units per cycle of the coarsest octave
    octaves: int = 3

    def validate(self):
        if self.width % 32 or self.height % 32:
            raise ValueError(f"image size {self.width}x{self.height} must be a multiple of 32")
        if self.num_views < 2:
            raise ValueError("need at least two views")
        if self.spheres is None and not 1 <= self.num_spheres <= 4:
            raise ValueError("num_spheres must be between 1 and 4")
        if self.depth_num < 1:
            raise ValueError("depth_num must be positive")


@dataclass
class SceneBundle:
    images: list  # uint8 [H, W, 3]
    cameras: list
    depths: Optional[list] = None  # float64 [H, W], 0 where invalid
    masks: Optional[list] = None  # bool [H, W]
    tracks: list = field(default_factory=list)
    spec: Optional[SceneSpec] = None

    @property
    def num_views(self) -> int:
        return len(self.images)

    @property
    def has_ground_truth(self) -> bool:
        return self.depths is not None and self.masks is not None


# -- texture --------------------------------------------------------------------

class ValueNoise:
    """Seeded lattice value noise in 3-D with smoothstep interpolation."""

    def __init__(self, rng: np.random.Generator, size: int = 256):
        self.size = size
        self.perm = rng.permutation(size)
        self.values = rng.random(size)

    def _hash(self, ix, iy, iz):
        m = self.size - 1
        p = self.perm
        return self.values[p[(p[(p[ix & m] + iy) & m] + iz) & m]]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        fl = np.floor(pts)
        i = fl.astype(np.int64)
        f = pts - fl
        u = f * f * (3.0 - 2.0 * f)
        out = np.zeros(pts.shape[0])
        for dx in (0, 1):
            wx = u[:, 0] if dx else 1.0 - u[:, 0]
            for dy in (0, 1):
                wy = u[:, 1] if dy else 1.0 - u[:, 1]
                for dz in (0, 1):
                    wz = u[:, 2] if dz else 1.0 - u[:, 2]
                    out += wx * wy * wz * self._hash(i[:, 0] + dx, i[:, 1] + dy, i[:, 2] + dz)
        return out


def _fractal(noise: ValueNoise, pts: np.ndarray, octaves: int) -> np.ndarray:
    total = np.zeros(pts.shape[0])
    norm = 0.0
    for o in range(octaves):
        amp = 0.5 ** o
        total += amp * noise(pts * (2.0 ** o) + 17.31 * o)
        norm += amp
    return total / norm


class Texture:
    """Multi-octave value noise mapped to RGB, one noise field per channel."""

    def __init__(self, seed: int, period: float, octaves: int):
        rng = np.random.default_rng([seed, 101])
        self.channels = [ValueNoise(rng) for _ in range(3)]
        self.period = period
        self.octaves = octaves

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        q = pts / self.period
        rgb = np.stack([_fractal(n, q, self.octaves) for n in self.channels], axis=1)
        # stretch the mid-heavy noise histogram to use more of the range
        rgb = np.clip((rgb - 0.5) * 2.2 + 0.5, 0.0, 1.0)
        return np.round(rgb * 255.0).astype(np.uint8)


# -- geometry of the scene ------------------------------------------------------

def _spheres(spec: SceneSpec) -> list:
    if spec.spheres is not None:
        return [s if isinstance(s, Sphere) else Sphere(tuple(s[0]), float(s[1])) for s in spec.spheres]
    rng = np.random.default_rng([spec.seed, 202])
    out = []
    lim = 0.35 * spec.plane_half_size
    for k in range(spec.num_spheres):
        r = float(rng.uniform(0.12, 0.2) * spec.plane_half_size)
        cx, cy = (0.0, 0.0) if k == 0 else rng.uniform(-lim, lim, size=2)
        out.append(Sphere((float(cx), float(cy), float(r * rng.uniform(0.6, 1.0))), r))
    return out


def make_cameras(spec: SceneSpec) -> list:
    target = np.asarray(spec.look_at, dtype=np.float64)
    f = spec.focal_factor * spec.width
    K = np.array([[f, 0.0, (spec.width - 1) / 2.0],
                  [0.0, f, (spec.height - 1) / 2.0],
                  [0.0, 0.0, 1.0]])
    el = np.radians(spec.elevation_deg)
    cams = []
    for k in range(spec.num_views):
        az = np.radians((k - (spec.num_views - 1) / 2.0) * spec.azimuth_step_deg)
        center = target + spec.ring_radius * np.array(
            [np.cos(el) * np.sin(az), -np.cos(el) * np.cos(az), np.sin(el)])
        R, t = look_at(center, target)
        cams.append(Camera(K.copy(), R, t))
    return cams


class SceneGeometry:
    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self.spheres = _spheres(spec)
        self.texture = Texture(spec.seed, spec.texture_period, spec.octaves)
        rng = np.random.default_rng([spec.seed, 303])
        lim = 0.5 * spec.plane_half_size
        self.patch_center = rng.uniform(-lim, lim, size=2)
        self.patch_radius = 0.18 * spec.plane_half_size

    def cast(self, cam: Camera, pixels: np.ndarray):
        """First hit along the rays through ``pixels[N, 2]``.

        Returns (depth[N], points[N, 3], hit[N]); depth is camera z and is
        ``inf`` where nothing is hit.
        """
        Kinv = np.linalg.inv(cam.K)
        hom = np.concatenate([pixels, np.ones((pixels.shape[0], 1))], axis=1)
        # camera-frame direction has z = 1, so the ray parameter is the depth
        dirs = (hom @ Kinv.T) @ cam.R
        origin = cam.center
        best = np.full(pixels.shape[0], np.inf)

        with np.errstate(divide="ignore", invalid="ignore"):
            tp = -origin[2] / dirs[:, 2]
        hit_xy = origin[:2] + tp[:, None] * dirs[:, :2]
        h = self.spec.plane_half_size
        ok = (tp > 0) & np.all(np.abs(hit_xy) <= h, axis=1)
        best = np.where(ok, tp, best)

        for s in self.spheres:
            oc = origin - np.asarray(s.center)
            a = np.einsum("ij,ij->i", dirs, dirs)
            b = 2.0 * dirs @ oc
            c = oc @ oc - s.radius ** 2
            disc = b * b - 4 * a * c
            sq = np.sqrt(np.maximum(disc, 0.0))
            # numerically stable roots
            q = -0.5 * (b + np.copysign(sq, b))
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = q / a
                r2 = c / q
            lo = np.minimum(r1, r2)
            hi = np.maximum(r1, r2)
            t = np.where(lo > 0, lo, np.where(hi > 0, hi, np.inf))
            t = np.where(disc >= 0, t, np.inf)
            best = np.minimum(best, t)

        hit = np.isfinite(best)
        pts = origin + np.where(hit, best, 0.0)[:, None] * dirs
        return best, pts, hit

    def shade(self, pts: np.ndarray) -> np.ndarray:
        rgb = self.texture(pts)
        if self.spec.textureless_patch:
            on_plane = np.abs(pts[:, 2]) < 1e-9
            d = np.linalg.norm(pts[:, :2] - self.patch_center, axis=1)
            rgb[on_plane & (d <= self.patch_radius)] = 128
        return rgb

    def render(self, cam: Camera):
        H, W = self.spec.height, self.spec.width
        ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
        pix = np.stack([xs.ravel(), ys.ravel()], axis=1)
        depth, pts, hit = self.cast(cam, pix)
        img = np.full((H * W, 3), BACKGROUND, dtype=np.uint8)
        img[hit] = self.shade(pts[hit])
        depth = np.where(hit, depth, 0.0)
        return img.reshape(H, W, 3), depth.reshape(H, W), hit.reshape(H, W)

    def visible(self, cam: Camera, points: np.ndarray, rel_tol: float = 1e-6) -> np.ndarray:
        """Occlusion test: which ``points`` are the first hit seen from ``cam``."""
        H, W = self.spec.height, self.spec.width
        pix, z = project_points(cam, points)
        inside = (z > 0) & np.all(np.isfinite(pix), axis=1)
        inside &= (pix[:, 0] >= -0.5) & (pix[:, 0] < W - 0.5)
        inside &= (pix[:, 1] >= -0.5) & (pix[:, 1] < H - 0.5)
        out = np.zeros(points.shape[0], dtype=bool)
        if np.any(inside):
            depth, _, hit = self.cast(cam, pix[inside])
            out[inside] = hit & (np.abs(depth - z[inside]) <= rel_tol * z[inside])
        return out


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """Render every view of ``spec``; the result is bit-identical for a given spec."""
    spec.validate()
    geo = SceneGeometry(spec)
    cams = make_cameras(spec)
    images, depths, masks = [], [], []
    for cam in cams:
        img, depth, mask = geo.render(cam)
        images.append(img)
        depths.append(depth)
        masks.append(mask)

    ranged = []
    for cam, depth, mask in zip(cams, depths, masks):
        if not mask.any():
            raise ValueError("a camera sees no surface; adjust the rig")
        lo = float(depth[mask].min()) * (1.0 - spec.depth_margin)
        hi = float(depth[mask].max()) * (1.0 + spec.depth_margin)
        ranged.append(Camera(cam.K, cam.R, cam.t, lo, hi, spec.depth_num))

    tracks = _sample_tracks(geo, ranged, depths, masks)
    return SceneBundle(images, ranged, depths, masks, tracks, spec)


def _sample_tracks(geo: SceneGeometry, cams: Sequence[Camera], depths, masks,
                   stride: int = 4) -> list:
    pts = []
    for cam, depth, mask in zip(cams, depths, masks):
        sub = np.zeros_like(mask)
        sub[::stride, ::stride] = True
        ys, xs = np.nonzero(mask & sub)
        pts.append(unproject_pixels(cam, np.stack([xs, ys], axis=1).astype(np.float64),
                                    depth[ys, xs]))
    pts = np.concatenate(pts)
    vis = np.stack([geo.visible(cam, pts) for cam in cams], axis=1)
    keep = vis.sum(axis=1) >= 2
    return [SparseTrack(p, np.nonzero(v)[0]) for p, v in zip(pts[keep], vis[keep])]
