"""``duopano`` command line.

Exit codes: 0 success, 1 usage error, 2 data/format/shape error, 3 numerical failure.
Every subcommand takes ``--seed`` and ``--config``; outputs are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig, load_config
from .errors import DataError, DuopanoError, FormatError, ShapeError, TrainingError
from .layout import RoomLayout, iou_2d, iou_3d, render_distance_map
from .ntf import atomic_write_bytes, ntf_read, ntf_write
from .resample import PerspImage, backproject_persp_to_erp, check_erp, project_to_rig
from .sphere import CameraIntrinsics, CameraPose, CameraRig, ErpGrid, icosahedron_rig

log = logging.getLogger("duopano")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --- file helpers -------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """(C, H, W) float64 from an NTF tensor or a PNG (scaled to [0, 1])."""
    path = Path(path)
    if path.suffix.lower() == ".ntf":
        arr = ntf_read(path).astype(np.float64)
        return arr[None] if arr.ndim == 2 else arr
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I"):
                return np.asarray(im, dtype=np.float64)[None] / 65535.0
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from None
    return np.moveaxis(arr, -1, 0)


def png_bytes(img: np.ndarray) -> bytes:
    """8-bit PNG of a (C, H, W) image in [0, 1]; array row 0 becomes the top image row."""
    from PIL import Image

    arr = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("cannot encode non-finite image")
    q = np.round(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8)
    if q.shape[0] == 1:
        pil = Image.fromarray(q[0], mode="L")
    else:
        pil = Image.fromarray(np.ascontiguousarray(np.moveaxis(q[:3], 0, -1)), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def png16_mm_bytes(dist: np.ndarray) -> bytes:
    """16-bit grayscale PNG of a (1, H, W) metre map, in millimetres, saturating."""
    from PIL import Image

    mm = np.clip(np.round(np.asarray(dist[0]) * 1000.0), 0, 65535).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(mm).save(buf, format="PNG")
    return buf.getvalue()


def write_image(img: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ntf":
        ntf_write(img, path)
    else:
        atomic_write_bytes(path, png_bytes(img))


def write_json(obj, path) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_csv(rows, header, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode())


def rig_to_dict(rig: CameraRig) -> dict:
    K = rig.intrinsics
    return {
        "fov": K.fov,
        "height": K.height,
        "width": K.width,
        "poses": [p.rotation.tolist() for p in rig.poses],
        "forward": [p.forward.tolist() for p in rig.poses],
    }


def rig_from_dict(d: dict) -> CameraRig:
    try:
        K = CameraIntrinsics(float(d["fov"]), int(d["height"]), int(d["width"]))
        return CameraRig(tuple(CameraPose(np.array(R, dtype=np.float64)) for R in d["poses"]), K)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad rig record: {exc}") from None


def load_rig(path) -> CameraRig:
    try:
        return rig_from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def default_rig(cfg: RunConfig, size: int | None = None) -> CameraRig:
    return icosahedron_rig(size or cfg.grid_height // 2, cfg.rig_fov)


def _toy_config(cfg: RunConfig):
    from .duet.model import ToyConfig

    try:
        return ToyConfig(height=cfg.grid_height, fov=cfg.rig_fov, sigma=cfg.eppa_sigma)
    except ShapeError as exc:
        raise DataError(f"config does not fit the toy model: {exc}") from None


# --- subcommands --------------------------------------------------------------


def cmd_project(args, cfg):
    pano = read_image(args.input)
    grid = check_erp(pano)
    rig = load_rig(args.rig) if args.rig else default_rig(cfg, args.size or grid.height // 2)
    views = project_to_rig(pano, rig, args.mode)
    out = Path(args.out)
    stack = np.stack([v.data for v in views])
    ntf_write(stack, out / "views.ntf")
    write_json(rig_to_dict(rig), out / "rig.json")
    if args.png:
        for i, v in enumerate(views):
            atomic_write_bytes(out / f"view_{i:02d}.png", png_bytes(v.data))
    print(f"{len(views)} views of {stack.shape[1:]} -> {out}")


def cmd_backproject(args, cfg):
    stack = ntf_read(args.views).astype(np.float64)
    if stack.ndim != 4:
        raise ShapeError(f"views tensor must be (N, C, h, w), got {stack.shape}")
    rig = load_rig(args.rig)
    if len(rig) != len(stack):
        raise ShapeError(f"{len(stack)} views but the rig has {len(rig)} cameras")
    views = [PerspImage(v, p, rig.intrinsics) for v, p in zip(stack, rig.poses)]
    grid = ErpGrid(args.height or cfg.grid_height)
    img, weight = backproject_persp_to_erp(views, grid)
    write_image(img, args.out)
    if args.weights:
        ntf_write(weight, args.weights)
    print(f"covered {int(np.count_nonzero(weight))}/{weight.size} pixels -> {args.out}")


def cmd_rig(args, cfg):
    rig = default_rig(cfg, args.size)
    if args.out:
        write_json(rig_to_dict(rig), args.out)
    else:
        json.dump(rig_to_dict(rig), sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


def cmd_spe(args, cfg):
    from .eppa import SpeConfig, build_spe_maps

    grid = ErpGrid(args.height or cfg.grid_height // 2)
    rig = default_rig(cfg, grid.view_size)
    pano, views = build_spe_maps(SpeConfig(args.channels), grid, rig)
    out = Path(args.out)
    ntf_write(pano, out / "spe_pano.ntf")
    ntf_write(views, out / "spe_views.ntf")
    print(f"SPE pano {pano.shape}, views {views.shape} -> {out}")


def cmd_mask(args, cfg):
    from .eppa import build_attention_masks

    grid = ErpGrid(args.height or cfg.grid_height // 2)
    rig = default_rig(cfg, grid.view_size)
    mask = build_attention_masks(grid, rig, cfg.eppa_sigma)
    ntf_write(mask.matrix, args.out)
    print(f"mask {mask.shape} -> {args.out}")


def cmd_synth(args, cfg):
    from .duet.synth import SynthParams, synth_dataset

    params = SynthParams(grid=ErpGrid(cfg.grid_height))
    data = synth_dataset(args.count, cfg.seed, params, default_rig(cfg))
    out = Path(args.out)
    ntf_write(np.stack([s.pano for s in data]), out / "panos.ntf")
    write_csv([(i, s.y, repr(s.sun_theta)) for i, s in enumerate(data)], ("index", "label", "sun_theta"), out / "labels.csv")
    if args.png:
        for i, s in enumerate(data):
            atomic_write_bytes(out / f"pano_{i:04d}.png", png_bytes(s.pano))
    print(f"{len(data)} panoramas -> {out}")


def cmd_train(args, cfg):
    from .duet.checkpoint import save_checkpoint
    from .duet.synth import SynthParams, synth_dataset
    from .duet.train import TrainConfig, smoothed, train_toy

    model_cfg = _toy_config(cfg)
    steps = args.steps or cfg.train_steps
    tcfg = TrainConfig(model=model_cfg, steps=steps, lr=cfg.train_lr, seed=cfg.seed, joint_noise=not args.independent_noise)
    rig = icosahedron_rig(model_cfg.view_size, model_cfg.fov)
    data = synth_dataset(args.dataset_size, cfg.seed, SynthParams(grid=model_cfg.grid), rig)
    result = train_toy(tcfg, data, log_every=args.log_every)
    out = Path(args.out)
    save_checkpoint(result.model, out, {"steps": steps, "lr": cfg.train_lr, "seed": cfg.seed})
    sm = smoothed(result.losses)
    write_csv([(i, repr(float(l))) for i, l in enumerate(result.losses)], ("step", "loss"), out / "losses.csv")
    print(f"trained {steps} steps, smoothed loss {sm[0]:.4f} -> {sm[-1]:.4f}; checkpoint {out}")


def cmd_sample(args, cfg):
    from .duet.checkpoint import load_checkpoint
    from .duet.model import ToyDenoiser
    from .duet.sampler import SamplerConfig, ddim_sample

    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        log.warning("no --checkpoint given; sampling from an untrained model")
        model = ToyDenoiser(_toy_config(cfg), seed=cfg.seed)
    sampler = SamplerConfig(
        steps=args.steps or cfg.sample_ddim_steps,
        seed=cfg.seed,
        rotation="none" if args.no_rotation else "lockstep",
        joint_init=not args.independent_init,
    )
    res = ddim_sample(model, sampler, args.label % model.config.n_classes)
    out = Path(args.out)
    atomic_write_bytes(out / "pano.png", png_bytes(res.pano))
    ntf_write(res.pano, out / "pano.ntf")
    ntf_write(np.stack([v.data for v in res.views]), out / "views.ntf")
    rig = CameraRig(tuple(v.pose for v in res.views), res.views[0].intrinsics)
    write_json(rig_to_dict(rig), out / "rig.json")
    print(f"sampled label {args.label} with seed {cfg.seed} -> {out}")


def cmd_layout_render(args, cfg):
    layout = RoomLayout.load(args.layout)
    dist = render_distance_map(layout, ErpGrid(args.height or cfg.grid_height), normalized=args.normalized)
    out = Path(args.out)
    if out.suffix.lower() == ".png":
        if args.normalized:
            raise DataError("16-bit millimetre PNG needs metric distances; drop --normalized or write .ntf")
        atomic_write_bytes(out, png16_mm_bytes(dist))
    else:
        ntf_write(dist, out)
    print(f"distance map {dist.shape[1:]}, range [{dist.min():.4f}, {dist.max():.4f}] -> {out}")


def cmd_layout_iou(args, cfg):
    a, b = RoomLayout.load(args.a), RoomLayout.load(args.b)
    if args.metric == "2d":
        print(iou_2d(a, b))
    elif args.metric == "3d":
        print(iou_3d(a, b))
    else:
        print(f"iou_2d {iou_2d(a, b)!r}\niou_3d {iou_3d(a, b)!r}")


def _load_panos(paths):
    panos = []
    for p in paths:
        arr = read_image(p)
        if arr.ndim == 4:  # a stacked NTF such as synth's panos.ntf
            panos.extend(arr)
        else:
            panos.append(arr)
    for x in panos:
        check_erp(x)
    return panos


def cmd_eval(args, cfg):
    panos = _load_panos(args.panos)
    provider = metrics.providers(args.provider, seed=cfg.seed)
    rows = []
    for i, x in enumerate(panos):
        s = metrics.seam_score(x)
        rows.append((i, repr(s.seam), repr(s.baseline), repr(s.ratio), repr(metrics.repetition_score(x, provider))))
    summary = {
        "count": len(panos),
        "provider": args.provider,
        "seam_ratio_mean": float(np.mean([float(r[3]) for r in rows])),
        "seam_ratio_max": float(np.max([float(r[3]) for r in rows])),
        "repetition_score_mean": float(np.mean([float(r[4]) for r in rows])),
    }
    if args.reference:
        ref = _load_panos(args.reference)
        fa = metrics.gaussian_stats([provider(x) for x in panos])
        fb = metrics.gaussian_stats([provider(x) for x in ref])
        summary["frechet"] = metrics.frechet_distance(fa, fb)
    if args.views:
        stack = ntf_read(args.views).astype(np.float64)
        rig = load_rig(args.rig) if args.rig else default_rig(cfg, stack.shape[-1])
        views = [PerspImage(v, p, rig.intrinsics) for v, p in zip(stack, rig.poses)]
        grid = ErpGrid(panos[0].shape[1]) if panos else ErpGrid(cfg.grid_height)
        summary["overlap_consistency"] = metrics.overlap_consistency(views, grid)
    out = Path(args.out)
    write_json(summary, out / "summary.json")
    write_csv(rows, ("index", "seam", "baseline", "seam_ratio", "repetition_score"), out / "metrics.csv")
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--config", default=None, help="key = value run configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="duopano", description="Dual-branch panorama diffusion mechanisms at desk scale.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help):
        sp = sub.add_parser(name, parents=[common], help=help)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("project", cmd_project, "project an ERP image onto the camera rig")
    sp.add_argument("input", help="ERP image (.png or .ntf)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--rig", help="rig JSON (default: icosahedral rig)")
    sp.add_argument("--size", type=int, help="view side in pixels (default H/2)")
    sp.add_argument("--mode", choices=("bilinear", "nearest"), default="bilinear")
    sp.add_argument("--png", action="store_true", help="also write one PNG per view")

    sp = add("backproject", cmd_backproject, "fuse perspective views back into an ERP image")
    sp.add_argument("views", help="(N, C, h, w) views tensor (.ntf)")
    sp.add_argument("--rig", required=True)
    sp.add_argument("--out", required=True, help=".png or .ntf")
    sp.add_argument("--height", type=int)
    sp.add_argument("--weights", help="also write the splat weight map (.ntf)")

    sp = add("rig", cmd_rig, "emit the icosahedral rig as JSON")
    sp.add_argument("--size", type=int)
    sp.add_argument("--out")

    sp = add("spe", cmd_spe, "emit spherical positional encodings for a feature grid")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--height", type=int, help="feature grid height (default grid.height/2)")
    sp.add_argument("--channels", type=int, default=32)

    sp = add("mask", cmd_mask, "emit the projection attention mask for a feature grid")
    sp.add_argument("--out", required=True, help=".ntf path")
    sp.add_argument("--height", type=int, help="feature grid height (default grid.height/2)")

    sp = add("synth", cmd_synth, "render a synthetic panorama dataset")
    sp.add_argument("--count", type=int, default=16)
    sp.add_argument("--out", required=True)
    sp.add_argument("--png", action="store_true")

    sp = add("train", cmd_train, "train the toy dual-branch denoiser")
    sp.add_argument("--out", required=True, help="checkpoint directory")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--dataset-size", type=int, default=32)
    sp.add_argument("--independent-noise", action="store_true")
    sp.add_argument("--log-every", type=int, default=0)

    sp = add("sample", cmd_sample, "DDIM-sample a panorama and its views")
    sp.add_argument("--checkpoint")
    sp.add_argument("--label", type=int, default=0)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-rotation", action="store_true")
    sp.add_argument("--independent-init", action="store_true")

    sp = add("layout-render", cmd_layout_render, "render a layout distance map")
    sp.add_argument("layout", help="layout JSON")
    sp.add_argument("--out", required=True, help=".ntf (metres) or .png (16-bit millimetres)")
    sp.add_argument("--height", type=int)
    sp.add_argument("--normalized", action="store_true", help="rescale to [-1, 1] per image")

    sp = add("layout-iou", cmd_layout_iou, "IoU between two layout JSON files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--metric", choices=("2d", "3d", "both"), default="2d")

    sp = add("eval", cmd_eval, "seam, repetition, Frechet and overlap metrics")
    sp.add_argument("panos", nargs="+", help="panoramas (.png, .ntf, or stacked .ntf)")
    sp.add_argument("--out", required=True, help="report directory")
    sp.add_argument("--reference", nargs="+", help="reference panoramas for the Frechet distance")
    sp.add_argument("--views", help="(N, C, h, w) views tensor for overlap consistency")
    sp.add_argument("--rig", help="rig JSON for --views")
    sp.add_argument("--provider", choices=("flatten-downsample", "random-projection"), default="flatten-downsample")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        args.fn(args, cfg)
    except TrainingError as exc:
        print(f"duopano: numerical failure: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"duopano: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DuopanoError, OSError) as exc:
        print(f"duopano: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
