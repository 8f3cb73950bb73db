"""Command-line pipeline: synth, train, infer, filter, fuse, eval, pipeline.

Every stage reads its inputs from and writes its results to the output
directory, so stages can be rerun independently::

    <output>/scene/          synthetic scene (synth)
    <output>/gt.ply          ground-truth cloud (synth)
    <output>/model.ckpt      parameters (train)
    <output>/loss.txt        per-step training loss (train)
    <output>/depth/*.pfm     refined depth maps at quarter resolution (infer)
    <output>/confidence/*.pfm
    <output>/filtered/*.pfm  depths passing both filters (filter)
    <output>/fused.ply       fused cloud (fuse)
    <output>/metrics.txt     key=value report (eval)
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import AUTO, ConfigError, PipelineConfig, load_config, parse_config, serialize_config
from .evaluate import evaluate
from .geometry import Camera, ViewSelectionParams
from .network import (
    FEATURE_DOWNSAMPLE,
    DepthNet,
    FeatureExtractorConfig,
    NetworkConfig,
    RefinerConfig,
    RegularizerConfig,
    TrainConfig,
    infer,
    load_checkpoint,
    make_sample,
    save_checkpoint,
    train,
)
from .postprocess import (
    FilterConfig,
    confidence_map,
    depth_to_points,
    fuse,
    geometric_consistency,
    photometric_filter,
)
from .scene import (
    SceneSpec,
    generate_scene,
    load_scene_dir,
    read_pfm,
    read_ply,
    save_scene_dir,
    view_name,
    write_pfm,
    write_ply,
)

log = logging.getLogger("planesweep")

COMMANDS = ("synth", "train", "infer", "filter", "fuse", "eval", "pipeline")
EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class InputError(ConfigError):
    """A required input file or directory is missing or unusable."""


# -- helpers --------------------------------------------------------------------

def _out(cfg: PipelineConfig, *parts) -> Path:
    return Path(cfg.output).joinpath(*parts)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"{what} not found: {path}")
    return path


def network_config(cfg: PipelineConfig) -> NetworkConfig:
    return NetworkConfig(
        FeatureExtractorConfig(channels=cfg.channel_list, single_layer=cfg.single_layer_features),
        RegularizerConfig(base_channels=cfg.reg_base_channels),
        RefinerConfig(channels=cfg.refine_channels, enabled=cfg.refinement),
        cfg.cost_metric)


def filter_config(cfg: PipelineConfig) -> FilterConfig:
    return FilterConfig(cfg.prob_threshold, cfg.pixel_threshold, cfg.rel_depth_threshold,
                        cfg.min_consistent_views)


def view_params(cfg: PipelineConfig) -> ViewSelectionParams:
    return ViewSelectionParams(cfg.theta0, cfg.sigma1, cfg.sigma2)


def scene_spec(cfg: PipelineConfig) -> SceneSpec:
    return SceneSpec(seed=cfg.seed, width=cfg.W, height=cfg.H, num_views=cfg.num_views,
                     num_spheres=cfg.num_spheres, textureless_patch=cfg.textureless_patch,
                     ring_radius=cfg.ring_radius, elevation_deg=cfg.elevation,
                     azimuth_step_deg=cfg.azimuth_step, focal_factor=cfg.focal_factor,
                     depth_num=cfg.D)


def _with_depth_range(cam: Camera, cfg: PipelineConfig) -> Camera:
    d_min = cam.depth_min if cfg.d_min == AUTO else float(cfg.d_min)
    if cfg.interval == AUTO:
        d_max = cam.depth_max if cfg.d_min == AUTO else max(cam.depth_max, d_min * 1.001)
        interval = (d_max - d_min) / max(cfg.D - 1, 1)
    else:
        interval = float(cfg.interval)
    return Camera(cam.K, cam.R, cam.t, d_min, d_min + (cfg.D - 1) * interval, cfg.D, interval)


def load_scene(cfg: PipelineConfig):
    root = _require(cfg.scene_dir, "scene directory")
    bundle = load_scene_dir(root)
    h, w = bundle.images[0].shape[:2]
    if (w, h) != (cfg.W, cfg.H):
        raise ConfigError(f"W = {cfg.W}, H = {cfg.H} do not match the scene images ({w}x{h}) in {root}")
    if cfg.N > bundle.num_views:
        raise ConfigError(f"N = {cfg.N} exceeds the {bundle.num_views} views in {root}")
    bundle.cameras = [_with_depth_range(c, cfg) for c in bundle.cameras]
    return bundle


def gt_cloud(bundle, stride: int):
    pts, cols = [], []
    for img, cam, depth, mask in zip(bundle.images, bundle.cameras, bundle.depths, bundle.masks):
        sub = np.zeros_like(mask)
        sub[::stride, ::stride] = True
        p, c, _ = depth_to_points(np.where(mask & sub, depth, 0.0), cam, img)
        pts.append(p)
        cols.append(c)
    return np.concatenate(pts), np.concatenate(cols)


def _small(img: np.ndarray) -> np.ndarray:
    return img[::FEATURE_DOWNSAMPLE, ::FEATURE_DOWNSAMPLE]


def _read_maps(cfg: PipelineConfig, n: int, folder: str):
    return [read_pfm(_require(_out(cfg, folder, f"{view_name(i)}.pfm"), f"{folder} map"))
            .astype(np.float64) for i in range(n)]


# -- stages ---------------------------------------------------------------------

def cmd_synth(cfg: PipelineConfig):
    bundle = generate_scene(scene_spec(cfg))
    root = _out(cfg, "scene")
    save_scene_dir(root, bundle)
    pts, cols = gt_cloud(bundle, cfg.gt_stride)
    write_ply(_out(cfg, "gt.ply"), pts, cols)
    log.info("synth: %d views written to %s, %d ground-truth points", bundle.num_views, root, len(pts))


def cmd_train(cfg: PipelineConfig):
    bundle = load_scene(cfg)
    if not bundle.has_ground_truth:
        raise InputError(f"training needs ground truth: {cfg.scene_dir / 'depths'} is missing")
    samples = [make_sample(bundle, i, cfg.N, view_params(cfg)) for i in range(bundle.num_views)]
    net = DepthNet(network_config(cfg), seed=cfg.seed)
    result = train(net, samples, TrainConfig(cfg.lam, cfg.N, cfg.iterations, cfg.lr, cfg.seed))
    Path(cfg.output).mkdir(parents=True, exist_ok=True)
    save_checkpoint(cfg.checkpoint_path, net.state_dict())
    _out(cfg, "loss.txt").write_text("".join(f"{v!r}\n" for v in result.loss_history))
    if result.loss_history:
        log.info("train: loss %.6g -> %.6g over %d steps", result.loss_history[0],
                 result.loss_history[-1], len(result.loss_history))


def cmd_infer(cfg: PipelineConfig):
    ckpt = _require(cfg.checkpoint_path, "checkpoint")
    bundle = load_scene(cfg)
    net = DepthNet(network_config(cfg), seed=cfg.seed)
    try:
        net.load_state_dict(load_checkpoint(ckpt))
    except ValueError as exc:
        raise InputError(f"checkpoint {ckpt} does not fit the configured network: {exc}") from None
    for sub in ("depth", "confidence"):
        _out(cfg, sub).mkdir(parents=True, exist_ok=True)
    for i in range(bundle.num_views):
        s = make_sample(bundle, i, cfg.N, view_params(cfg))
        depth, prob = infer(net, s.images, s.cams, s.depths)
        conf = confidence_map(prob, s.depths, depth)
        write_pfm(_out(cfg, "depth", f"{view_name(i)}.pfm"), depth)
        write_pfm(_out(cfg, "confidence", f"{view_name(i)}.pfm"), conf)
        log.info("infer: view %d with sources %s", i, list(s.view_indices[1:]))


def _small_views(cfg: PipelineConfig):
    bundle = load_scene(cfg)
    n = bundle.num_views
    depths = _read_maps(cfg, n, "depth")
    confs = _read_maps(cfg, n, "confidence")
    cams = [c.scaled(1.0 / FEATURE_DOWNSAMPLE) for c in bundle.cameras]
    images = [_small(img) for img in bundle.images]
    return depths, confs, cams, images


def cmd_filter(cfg: PipelineConfig):
    depths, confs, cams, _ = _small_views(cfg)
    fc = filter_config(cfg)
    photo = [photometric_filter(d, c, fc)[0] for d, c in zip(depths, confs)]
    _out(cfg, "filtered").mkdir(parents=True, exist_ok=True)
    for i, (d, cam) in enumerate(zip(photo, cams)):
        others = [(photo[j], cams[j]) for j in range(len(photo)) if j != i]
        count, fused = geometric_consistency((d, cam), others, fc)
        keep = (d > 0) & (count + 1 >= fc.min_consistent_views)
        write_pfm(_out(cfg, "filtered", f"{view_name(i)}.pfm"), fused, keep)
        log.info("filter: view %d keeps %d of %d pixels", i, int(keep.sum()), keep.size)


def cmd_fuse(cfg: PipelineConfig):
    depths, confs, cams, images = _small_views(cfg)
    cloud = fuse(list(zip(depths, confs, cams, images)), filter_config(cfg))
    write_ply(_out(cfg, "fused.ply"), cloud)
    log.info("fuse: %d points", len(cloud))


def cmd_eval(cfg: PipelineConfig):
    recon, _ = read_ply(_require(_out(cfg, "fused.ply"), "fused cloud"))
    gt_path = _out(cfg, "gt.ply")
    if gt_path.exists():
        gt, _ = read_ply(gt_path)
    else:
        bundle = load_scene(cfg)
        if not bundle.has_ground_truth:
            raise InputError(f"evaluation needs {gt_path} or ground-truth depths in {cfg.scene_dir}")
        gt, _ = gt_cloud(bundle, cfg.gt_stride)
    if len(recon) == 0:
        raise RuntimeError(f"fused cloud {_out(cfg, 'fused.ply')} is empty; nothing to evaluate")
    report = evaluate(recon, gt, cfg.cap, cfg.threshold_list, cfg.nn_method)
    _out(cfg, "metrics.txt").write_text(report.to_keyvalue())
    sys.stderr.write(report.to_table())


def cmd_pipeline(cfg: PipelineConfig):
    if not cfg.scene:
        cmd_synth(cfg)
    for stage in (cmd_train, cmd_infer, cmd_filter, cmd_fuse, cmd_eval):
        stage(cfg)


STAGES = {"synth": cmd_synth, "train": cmd_train, "infer": cmd_infer, "filter": cmd_filter,
          "fuse": cmd_fuse, "eval": cmd_eval, "pipeline": cmd_pipeline}


# -- entry point ------------------------------------------------------------------

def _overrides(extra: list) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--") or len(arg) == 2:
            raise ConfigError(f"unexpected argument {arg!r}; overrides look like --key value")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override --{key} has no value")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def run(command: str, cfg: PipelineConfig) -> int:
    try:
        Path(cfg.output).mkdir(parents=True, exist_ok=True)
        _out(cfg, "config.txt").write_text(serialize_config(cfg))
        STAGES[command](cfg)
    except ConfigError as exc:
        log.error("%s: %s", command, exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - report any stage failure as exit 2
        log.error("%s failed: %s: %s", command, type(exc).__name__, exc)
        return EXIT_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="planesweep", description="Learned plane-sweep multi-view stereo pipeline.",
        epilog="Any config key can be overridden with --key value.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", help="key = value config file")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        text = load_config(args.config) if args.config else ""
        cfg = parse_config(text, _overrides(extra))
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_INVALID
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
