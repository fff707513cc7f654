"""Command-line front end.

Subcommands ``attack``, ``ablate``, ``render`` and ``eval`` share one flat
``key = value`` configuration (see :class:`RunConfig`).  Values come from the
defaults, then the ``--config`` file, then ``--set key=value`` and the
dedicated flags, later sources winning.  Every run echoes the resolved
configuration to ``config.txt`` in its output directory.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import HAVE_PNG, read_image, write_image, write_mask, write_ppm
from .ngc import calibrate
from .optim import TrainConfig, coverage_report, initial_texture, train
from .renderer import GradField, Texture, composite, make_background, rasterize, shade
from .scene import PoseGrid, bundled_car_path, load_obj, make_pose, pose_grid
from .surrogate import Surrogate, detection_score_sweep

__all__ = ["RunConfig", "ConfigError", "main", "cmd_attack", "cmd_ablate", "cmd_render",
           "cmd_eval"]

log = logging.getLogger("texcamo")

CANONICAL_POSE = (45.0, 15.0, 10.0)  # azimuth, elevation, distance of comparison strips
SCORE_LABEL = "surrogate suppression score"
QUARTET = (("baseline", False, False), ("ngc", True, False), ("lpgd", False, True),
           ("ngc+lpgd", True, True))


class ConfigError(Exception):
    """Invalid command line or configuration; maps to exit code 1."""


@dataclass(frozen=True)
class RunConfig:
    # scene and texture
    mesh: str = "bundled"
    texture_w: int = 64
    texture_h: int = 64
    mask: str = "all-trainable"
    texture: str = ""
    out: str = "run"
    # optimization
    lr: float = 0.1
    epochs: int = 3
    k: int = 8
    tau: float = 8.0
    enable_ngc: bool = True
    enable_lpgd: bool = True
    seed: int = 0
    lpgd_eps: float = 1e-12
    augment_brightness: bool = False
    threads: int = 1
    # poses and rendering
    elevations: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0)
    azimuth_step_deg: float = 2.0
    distances: tuple = (10.0,)
    azimuth_offset_deg: float = 0.0
    eval_azimuth_offset_deg: float = 0.0
    fov_deg: float = 60.0
    image_w: int = 256
    image_h: int = 256
    background: str = "gradient"
    # outputs
    checkpoint_every: int = 0
    diagnostics: bool = False
    coverage_dump: bool = False
    png: bool = False
    # ablate
    sweep: str = "quartet"
    sweep_values: tuple = ()

    # -- serialization -------------------------------------------------
    def to_text(self):
        lines = [f"{f.name} = {_format_value(getattr(self, f.name))}"
                 for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        return (base or cls()).with_overrides(parse_pairs(text.splitlines()))

    def with_overrides(self, pairs):
        """Copy with ``{key: raw string}`` values parsed against the field types."""
        types = {f.name: type(f.default) for f in dataclasses.fields(self)}
        changes = {}
        for key, raw in pairs.items():
            if key not in types:
                raise ConfigError(f"unknown config key '{key}'")
            changes[key] = _parse_value(key, raw, types[key])
        return dataclasses.replace(self, **changes)

    def config_hash(self):
        """Digest of everything except the output location."""
        text = dataclasses.replace(self, out="").to_text()
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    # -- derived objects ---------------------------------------------------
    def grid(self, azimuth_offset_deg=None):
        offset = self.azimuth_offset_deg if azimuth_offset_deg is None else azimuth_offset_deg
        try:
            return PoseGrid(self.elevations, self.azimuth_step_deg, self.distances, offset)
        except ValueError as err:
            raise ConfigError(f"pose grid: {err}") from None

    def train_config(self):
        try:
            return TrainConfig(lr=self.lr, epochs=self.epochs, k=self.k, tau=self.tau,
                               enable_ngc=self.enable_ngc, enable_lpgd=self.enable_lpgd,
                               seed=self.seed, grid=self.grid(), fov_deg=self.fov_deg,
                               image_w=self.image_w, image_h=self.image_h,
                               background=self.background,
                               augment_brightness=self.augment_brightness,
                               lpgd_eps=self.lpgd_eps, threads=self.threads)
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def eval_poses(self):
        grid = self.grid(self.eval_azimuth_offset_deg)
        return self._poses(grid)

    def _poses(self, grid):
        try:
            return pose_grid(grid, self.fov_deg, self.image_w, self.image_h)
        except ValueError as err:
            raise ConfigError(f"pose grid: {err}") from None


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(key, raw, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse '{raw}' as {kind.__name__}") from None


def parse_pairs(lines, source="config"):
    """``key = value`` lines to a dict; blank lines and ``#`` comments ignored."""
    pairs = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {n}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


# ---------------------------------------------------------------------------
# shared helpers


def _check_file(field_name, value):
    if not Path(value).is_file():
        raise ConfigError(f"{field_name}: file not found: {value}")


def resolve_inputs(cfg, need_texture=False):
    """Validate paths and numeric settings before any work starts."""
    if cfg.mesh != "bundled":
        _check_file("mesh", cfg.mesh)
    if cfg.mask != "all-trainable":
        _check_file("mask", cfg.mask)
    if need_texture:
        if not cfg.texture:
            raise ConfigError("texture: a texture file is required")
        _check_file("texture", cfg.texture)
    elif cfg.texture:
        _check_file("texture", cfg.texture)
    if cfg.texture_w < 1 or cfg.texture_h < 1:
        raise ConfigError("texture_w and texture_h must be positive")
    if cfg.checkpoint_every < 0:
        raise ConfigError("checkpoint_every must be nonnegative")
    cfg.train_config()
    cfg.eval_poses()


def load_mesh(cfg):
    return load_obj(bundled_car_path() if cfg.mesh == "bundled" else cfg.mesh)


def load_mask(cfg):
    if cfg.mask == "all-trainable":
        return None
    img = read_image(cfg.mask)
    if img.shape[:2] != (cfg.texture_h, cfg.texture_w):
        raise ConfigError(f"mask: image is {img.shape[1]}x{img.shape[0]}, "
                          f"texture is {cfg.texture_w}x{cfg.texture_h}")
    mask = img.mean(axis=2) > 0.5
    if not mask.any():
        raise ConfigError("mask: no trainable texels")
    return mask


def load_texture(path, mask=None):
    path = Path(path)
    rgb = np.load(path) if path.suffix.lower() == ".npy" else read_image(path)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ConfigError(f"texture: expected an (H, W, 3) array in {path}")
    if mask is not None and mask.shape != rgb.shape[:2]:
        raise ConfigError("texture: size does not match the mask")
    return Texture(rgb, mask)


def _fmt(x):
    return f"{float(x):g}"


def pose_filename(pose, suffix=".ppm"):
    return f"az{_fmt(pose.azimuth_deg)}_el{_fmt(pose.elevation_deg)}_d{_fmt(pose.distance_m)}{suffix}"


def render_view(mesh, texture, pose, background):
    sm = rasterize(mesh, pose, texture.shape)
    bg = make_background(background, pose.image_w, pose.image_h)
    return composite(shade(sm, texture), sm, bg)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _save_image(path, img, png):
    write_ppm(path, img)
    if png and HAVE_PNG:
        write_image(Path(path).with_suffix(".png"), img)


def _setup_logging(out):
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    log.propagate = False


def _prepare_out(cfg):
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"out: cannot create {out}: {err}") from None
    (out / "config.txt").write_text(cfg.to_text())
    _setup_logging(out)
    log.info("config hash %s", cfg.config_hash())
    return out


def _mean_score(surrogate, mesh, texture, poses, background):
    rows = detection_score_sweep(surrogate, mesh, texture, poses, background)
    return float(np.mean([s for _, s in rows])), rows


def _run_training(cfg, mesh, surrogate, mask, on_step=None, diagnostics=False):
    tcfg = cfg.train_config()
    start = (load_texture(cfg.texture, mask) if cfg.texture
             else initial_texture(cfg.texture_h, cfg.texture_w, cfg.seed, mask))
    if cfg.k > len(tcfg.poses()):
        raise ConfigError(f"k={cfg.k} exceeds the {len(tcfg.poses())} training poses")
    final, metrics = train(mesh, surrogate, tcfg, texture=start, on_step=on_step,
                           diagnostics=diagnostics)
    return start, final, metrics


# ---------------------------------------------------------------------------
# subcommands


def cmd_attack(cfg):
    resolve_inputs(cfg)
    out = _prepare_out(cfg)
    mesh, mask, surrogate = load_mesh(cfg), load_mask(cfg), Surrogate()
    chash = cfg.config_hash()
    ckpt_dir = out / "checkpoints"

    def on_step(texture, m):
        n = m.step + 1
        log.info("step %d epoch %d mean_loss %r", n, m.epoch, m.mean_loss)
        if cfg.checkpoint_every and n % cfg.checkpoint_every == 0:
            ckpt_dir.mkdir(exist_ok=True)
            write_ppm(ckpt_dir / f"step_{n:06d}.ppm", texture.rgb)
            (ckpt_dir / f"step_{n:06d}.txt").write_text(f"step = {n}\nconfig_hash = {chash}\n")

    t0 = time.perf_counter()
    start, final, metrics = _run_training(cfg, mesh, surrogate, mask, on_step, cfg.diagnostics)
    log.info("training finished: %d steps in %.2fs", len(metrics), time.perf_counter() - t0)

    np.save(out / "texture.npy", final.rgb)
    _save_image(out / "texture.ppm", final.rgb, cfg.png)
    write_csv(out / "metrics.csv",
              ["step", "epoch", "mean_loss", "losses", "grad_norm", "coverage_pre",
               "coverage_post"],
              [(m.step, m.epoch, m.mean_loss, ";".join(repr(float(x)) for x in m.losses),
                m.grad_norm, m.coverage_pre, m.coverage_post) for m in metrics])
    # wall-clock data stays out of the .csv outputs, which must be reproducible
    write_csv(out / "timing.log", ["step", "t_forward_backward", "t_ngc", "t_lpgd"],
              [(m.step, m.t_forward_backward, m.t_ngc, m.t_lpgd) for m in metrics])
    _write_overhead(out / "overhead.txt", metrics)
    if cfg.diagnostics:
        write_csv(out / "lpgd_diagnostics.csv", ["step", "losses", "cos_pre", "cos_post"],
                  [(m.step, ";".join(repr(float(x)) for x in m.losses),
                    ";".join(repr(float(c)) for c in m.lpgd_cosines[0]),
                    ";".join(repr(float(c)) for c in m.lpgd_cosines[1])) for m in metrics])
    if cfg.coverage_dump:
        _dump_coverage(out / "coverage", cfg, mesh, final)

    poses = cfg.eval_poses()
    initial_score, _ = _mean_score(surrogate, mesh, start, poses, cfg.background)
    final_score, _ = _mean_score(surrogate, mesh, final, poses, cfg.background)
    summary = (
        f"{SCORE_LABEL} (mean over {len(poses)} evaluation poses; lower is better)\n"
        f"initial: {initial_score!r}\n"
        f"final: {final_score!r}\n"
        f"change: {final_score - initial_score!r}\n"
        f"steps: {len(metrics)}\n"
        "note: scores come from the fixed surrogate scorer and are not detector AP values\n"
    )
    (out / "summary.txt").write_text(summary)
    print(summary, end="")
    return 0


def _write_overhead(path, metrics):
    base = float(np.mean([m.t_forward_backward for m in metrics]))
    ngc = float(np.mean([m.t_ngc for m in metrics]))
    lpgd = float(np.mean([m.t_lpgd for m in metrics]))
    path.write_text(
        "mean seconds per step\n"
        f"forward_backward: {base!r}\n"
        f"ngc: {ngc!r}\n"
        f"lpgd: {lpgd!r}\n"
        f"ngc_over_base: {ngc / base if base else float('nan')!r}\n"
        f"lpgd_over_base: {lpgd / base if base else float('nan')!r}\n")


def _dump_coverage(directory, cfg, mesh, texture):
    """Pre/post calibration touched masks at the canonical angle, one pair per distance."""
    directory.mkdir(exist_ok=True)
    az, el, _ = CANONICAL_POSE
    for d in cfg.distances:
        pose = make_pose(az, el, d, cfg.fov_deg, cfg.image_w, cfg.image_h)
        sampled = rasterize(mesh, pose, texture.shape).sampled_mask() & texture.mask
        ind = GradField(np.repeat(sampled[..., None], 3, axis=2).astype(np.float64))
        post = calibrate(ind, texture.mask, cfg.tau).touched
        write_mask(directory / f"d{_fmt(d)}_pre.ppm", sampled)
        write_mask(directory / f"d{_fmt(d)}_post.ppm", post)
    poses = cfg.eval_poses()
    rows = coverage_report(mesh, texture, poses, cfg.tau)
    keys = ["distance_m", "n_poses", "sampled", "calibrated", "sampled_ratio", "calibrated_ratio"]
    write_csv(directory / "coverage.csv", keys, [[r[k] for k in keys] for r in rows])


def _sweep_variants(cfg):
    if cfg.sweep == "quartet":
        return [(name, {"enable_ngc": ngc, "enable_lpgd": lp}) for name, ngc, lp in QUARTET]
    if not cfg.sweep_values:
        raise ConfigError(f"sweep_values: required for a '{cfg.sweep}' sweep")
    if cfg.sweep == "tau":
        return [(f"tau={_fmt(t)}", {"tau": float(t)}) for t in cfg.sweep_values]
    if cfg.sweep == "k":
        if any(v != int(v) or v < 1 for v in cfg.sweep_values):
            raise ConfigError("sweep_values: k values must be positive integers")
        return [(f"k={int(v)}", {"k": int(v)}) for v in cfg.sweep_values]
    raise ConfigError(f"sweep: expected quartet, tau or k, got '{cfg.sweep}'")


def cmd_ablate(cfg):
    resolve_inputs(cfg)
    variants = _sweep_variants(cfg)
    runs = [(name, dataclasses.replace(cfg, **changes)) for name, changes in variants]
    for _, rc in runs:
        resolve_inputs(rc)
        if rc.k > len(rc.train_config().poses()):
            raise ConfigError(f"k={rc.k} exceeds the {len(rc.train_config().poses())} poses")
    out = _prepare_out(cfg)
    mesh, mask, surrogate = load_mesh(cfg), load_mask(cfg), Surrogate()
    poses = cfg.eval_poses()
    tex_dir = out / "textures"
    tex_dir.mkdir(exist_ok=True)
    az, el, d = CANONICAL_POSE
    canonical = make_pose(az, el, d, cfg.fov_deg, cfg.image_w, cfg.image_h)
    rows, tiles = [], []
    for name, rc in runs:
        t0 = time.perf_counter()
        start, final, metrics = _run_training(rc, mesh, surrogate, mask)
        initial_score, _ = _mean_score(surrogate, mesh, start, poses, cfg.background)
        final_score, _ = _mean_score(surrogate, mesh, final, poses, cfg.background)
        elapsed = time.perf_counter() - t0
        log.info("%s: %d steps, final %r (%.2fs)", name, len(metrics), final_score, elapsed)
        print(f"{name}: {SCORE_LABEL} {final_score!r}")
        rows.append((name, rc.enable_ngc, rc.enable_lpgd, rc.tau, rc.k, initial_score,
                     final_score))
        np.save(tex_dir / f"{name.replace('+', '_').replace('=', '_')}.npy", final.rgb)
        tiles.append(render_view(mesh, final, canonical, cfg.background))
    write_csv(out / "ablation.csv",
              ["config_id", "enable_ngc", "enable_lpgd", "tau", "k", "initial_score",
               "final_score"], rows)
    _save_image(out / "strip.ppm", np.concatenate(tiles, axis=1), cfg.png)
    return 0


def cmd_render(cfg, poses):
    resolve_inputs(cfg, need_texture=True)
    out = _prepare_out(cfg)
    mesh = load_mesh(cfg)
    texture = load_texture(cfg.texture, load_mask(cfg))
    for pose in poses:
        path = out / pose_filename(pose)
        _save_image(path, render_view(mesh, texture, pose, cfg.background), cfg.png)
        log.info("wrote %s", path)
    print(f"rendered {len(poses)} view(s) to {out}")
    return 0


def cmd_eval(cfg):
    resolve_inputs(cfg, need_texture=True)
    out = _prepare_out(cfg)
    mesh = load_mesh(cfg)
    texture = load_texture(cfg.texture, load_mask(cfg))
    poses = cfg.eval_poses()
    mean, rows = _mean_score(Surrogate(), mesh, texture, poses, cfg.background)
    write_csv(out / "scores.csv", ["azimuth_deg", "elevation_deg", "distance_m", "score"],
              [(p.azimuth_deg, p.elevation_deg, p.distance_m, s) for p, s in rows])
    for key, name in (("elevation_deg", "by_elevation.csv"), ("distance_m", "by_distance.csv")):
        buckets = {}
        for p, s in rows:
            buckets.setdefault(getattr(p, key), []).append(s)
        write_csv(out / name, [key, "n_poses", "mean_score"],
                  [(b, len(v), float(np.mean(v))) for b, v in sorted(buckets.items())])
    (out / "summary.txt").write_text(
        f"{SCORE_LABEL} (mean over {len(poses)} poses; lower is better)\nmean: {mean!r}\n")
    print(f"{SCORE_LABEL}: {mean!r} over {len(poses)} poses")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (created if absent)")
    common.add_argument("--threads", type=int, help="views processed in parallel per step")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key; repeatable")

    parser = _Parser(prog="texcamo", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("attack", parents=[common], help="optimize a texture")
    ab = sub.add_parser("ablate", parents=[common], help="run a component, tau or k sweep")
    ab.add_argument("--sweep", choices=["quartet", "tau", "k"])
    ab.add_argument("--values", help="comma-separated sweep values")
    rd = sub.add_parser("render", parents=[common], help="render a texture at given poses")
    rd.add_argument("--texture")
    rd.add_argument("--azimuth", type=float, default=CANONICAL_POSE[0])
    rd.add_argument("--elevation", type=float, default=CANONICAL_POSE[1])
    rd.add_argument("--distance", type=float, default=CANONICAL_POSE[2])
    rd.add_argument("--grid", action="store_true", help="render every pose of the grid")
    ev = sub.add_parser("eval", parents=[common], help="score a texture over the pose grid")
    ev.add_argument("--texture")
    return parser


def resolve_config(args):
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: file not found: {path}")
        cfg = cfg.with_overrides(parse_pairs(path.read_text().splitlines(), str(path)))
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg = cfg.with_overrides(overrides)
    flags = {"seed": args.seed, "out": args.out, "threads": args.threads,
             "texture": getattr(args, "texture", None), "sweep": getattr(args, "sweep", None)}
    cfg = dataclasses.replace(cfg, **{k: v for k, v in flags.items() if v is not None})
    if getattr(args, "values", None) is not None:
        cfg = cfg.with_overrides({"sweep_values": args.values})
    return cfg


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "render":
            if args.grid:
                poses = cfg._poses(cfg.grid())
            else:
                try:
                    poses = [make_pose(args.azimuth, args.elevation, args.distance,
                                       cfg.fov_deg, cfg.image_w, cfg.image_h)]
                except ValueError as err:
                    raise ConfigError(f"pose: {err}") from None
            return cmd_render(cfg, poses)
        return cmd_eval(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # anything after validation is a runtime failure
        log.exception("run failed")
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
