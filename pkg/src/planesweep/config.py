"""Plain-text pipeline configuration (``key = value`` per line, ``#`` comments)."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


AUTO = "auto"
# file keys that are not valid Python identifiers
_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


@dataclass
class PipelineConfig:
    # scene
    scene: str = ""  # existing scene directory; empty -> <output>/scene
    seed: int = 0
    W: int = 128
    H: int = 96
    num_views: int = 4
    num_spheres: int = 1
    textureless_patch: bool = False
    ring_radius: float = 600.0
    elevation: float = 45.0
    azimuth_step: float = 15.0
    focal_factor: float = 1.6
    D: int = 48
    d_min: str = AUTO  # "auto" keeps the per-camera range from the scene
    interval: str = AUTO
    gt_stride: int = 2
    # network
    feature_channels: str = "8,8,16,16,16,32,32,32"
    single_layer_features: bool = False
    reg_base_channels: int = 8
    refine_channels: int = 32
    refinement: bool = True
    cost_metric: str = "variance"
    # training
    N: int = 3
    lam: float = 1.0
    iterations: int = 1000
    lr: float = 1e-3
    # view selection
    theta0: float = 5.0
    sigma1: float = 1.0
    sigma2: float = 10.0
    # filtering and fusion
    prob_threshold: float = 0.8
    pixel_threshold: float = 1.0
    rel_depth_threshold: float = 0.01
    min_consistent_views: int = 3
    # evaluation
    cap: float = 20.0
    thresholds: str = "1,2"
    nn_method: str = "grid"
    # artifacts
    output: str = "out"
    checkpoint: str = ""  # empty -> <output>/model.ckpt

    def validate(self):
        if self.W <= 0 or self.W % 32:
            raise ConfigError(f"W = {self.W}: image width must be a positive multiple of 32")
        if self.H <= 0 or self.H % 32:
            raise ConfigError(f"H = {self.H}: image height must be a positive multiple of 32")
        if self.D <= 0 or self.D % 8:
            raise ConfigError(f"D = {self.D}: hypothesis count must be a positive multiple of 8")
        if self.N < 2:
            raise ConfigError(f"N = {self.N}: need at least 2 views")
        if self.num_views < 2:
            raise ConfigError(f"num_views = {self.num_views}: need at least 2 views")
        if not 1 <= self.num_spheres <= 4:
            raise ConfigError(f"num_spheres = {self.num_spheres}: must be between 1 and 4")
        if self.lam < 0:
            raise ConfigError(f"lambda = {self.lam}: must be non-negative")
        if self.iterations < 0:
            raise ConfigError(f"iterations = {self.iterations}: must be non-negative")
        for key in ("lr", "prob_threshold", "pixel_threshold", "rel_depth_threshold", "cap",
                    "sigma1", "sigma2", "focal_factor", "ring_radius"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} = {getattr(self, key)}: must be positive")
        if self.min_consistent_views < 2:
            raise ConfigError(f"min_consistent_views = {self.min_consistent_views}: must be at least 2")
        if self.gt_stride < 1:
            raise ConfigError(f"gt_stride = {self.gt_stride}: must be at least 1")
        if self.cost_metric not in ("variance", "mean"):
            raise ConfigError(f"cost_metric = {self.cost_metric}: use variance or mean")
        if self.nn_method not in ("grid", "brute"):
            raise ConfigError(f"nn_method = {self.nn_method}: use grid or brute")
        channels = self.channel_list
        if len(channels) != 8 or min(channels) < 1:
            raise ConfigError(f"feature_channels = {self.feature_channels}: need 8 positive integers")
        if min(self.threshold_list) <= 0:
            raise ConfigError(f"thresholds = {self.thresholds}: must be positive")
        for key in ("d_min", "interval"):
            v = getattr(self, key)
            if v != AUTO and not _to_float(key, v) > 0:
                raise ConfigError(f"{key} = {v}: must be positive or {AUTO}")
        if self.scene and not Path(self.scene).is_dir():
            raise ConfigError(f"scene = {self.scene}: directory does not exist")
        if self.reg_base_channels < 1 or self.refine_channels < 1:
            raise ConfigError("channel counts must be positive")

    @property
    def channel_list(self) -> list:
        return _int_list("feature_channels", self.feature_channels)

    @property
    def threshold_list(self) -> list:
        return [_to_float("thresholds", v) for v in self.thresholds.split(",") if v.strip()]

    @property
    def scene_dir(self) -> Path:
        return Path(self.scene) if self.scene else Path(self.output) / "scene"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.output) / "model.ckpt"

    def set(self, key: str, raw: str):
        name = _KEY_TO_FIELD.get(key, key)
        types = {f.name: f.type for f in fields(self)}
        if name not in types or key in _FIELD_TO_KEY:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(self, name, _convert(key, types[name], raw))


def _to_float(key, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw}: not a number") from None


def _int_list(key, raw) -> list:
    try:
        return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key} = {raw}: expected comma-separated integers") from None


def _convert(key: str, typ: str, raw: str):
    raw = raw.strip()
    if typ == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key} = {raw}: expected true or false")
    if typ == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} = {raw}: expected an integer") from None
    if typ == "float":
        return _to_float(key, raw)
    return raw


def parse_config(text: str, overrides: dict | None = None) -> PipelineConfig:
    """Parse ``key = value`` lines, apply ``overrides``, then validate."""
    cfg = PipelineConfig()
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {n}: {exc}") from None
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    cfg.validate()
    return cfg


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: PipelineConfig) -> str:
    return "".join(f"{_FIELD_TO_KEY.get(f.name, f.name)} = {_format(getattr(cfg, f.name))}\n"
                   for f in fields(cfg))


def load_config(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return p.read_text()
