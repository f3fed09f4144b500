"""Command-line entry point.

One binary, six subcommands: inpaint, preprocess, eval, entropy, schedule,
netspec. Exit codes: 0 success, 1 usage error, 2 data/validation error.
Diagnostics go to stderr; data goes to files or stdout. Every run logs its
fully resolved configuration. A ``--config`` file of ``key = value`` lines
supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from collections import deque
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, binarize, metrics, netspec, pipeline, schedule
from .errors import NucleitkError, ValidationError
from .inpaint import InpaintConfig
from .mask_core import (
    load_image,
    load_labelmap,
    load_mask,
    load_raw,
    save_image,
    save_labelmap,
    save_mask,
)

log = logging.getLogger("nucleitk")

DEFAULTS = {
    "beta": 2,
    "radius": 3,
    "iou_threshold": 0.5,
    "min_objects": 3,
    "patch_size": 256,
    "patch_count": 10000,
    "warmup_steps": 500,
    "base_lr": 0.002,
    "final_lr": 0.0002,
}


def version_and_provenance() -> str:
    lines = [f"nucleitk {__version__}", "defaults:"]
    for key, value in DEFAULTS.items():
        lines.append(f"  {key} = {value}")
    return "\n".join(lines)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; this toolkit reserves 2 for data
    # errors, so route usage problems through our own exception instead
    def error(self, message):
        raise UsageError(message)


class _VersionAction(argparse.Action):
    def __init__(self, option_strings, dest, **kwargs):
        super().__init__(option_strings, dest, nargs=0, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        print(version_and_provenance())
        parser.exit(0)


def _add_config_flag(sub):
    sub.add_argument(
        "--config",
        help="file of 'key = value' lines providing defaults; flags override it",
    )


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="nucleitk", description=__doc__)
    parser.add_argument("--version", action=_VersionAction, help="print version and defaults")
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    p = subs.add_parser("inpaint", help="remove unannotated thresholded objects from an image")
    p.add_argument("--image", required=True, help="input PNG (8-bit gray or RGB)")
    p.add_argument("--mask", required=True, help="annotation mask PNG ({0,255})")
    p.add_argument("--out", required=True, help="output PNG for the cleaned image")
    p.add_argument("--aux-out", help="optional PNG for the auxiliary mask that was filled")
    p.add_argument("--radius", type=int, default=DEFAULTS["radius"])
    p.add_argument(
        "--polarity",
        choices=binarize.POLARITIES,
        default=binarize.DARK_FOREGROUND,
        help="which intensity class counts as objects when thresholding",
    )
    p.add_argument("--gradient-term", action="store_true", help="direction-weighted fill")
    _add_config_flag(p)
    registry["inpaint"] = p

    p = subs.add_parser("preprocess", help="normalize, crop, augment, filter, invert patches")
    p.add_argument("--src-dir", required=True, help="directory with images/ and labels/ PNGs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--patch-size", type=int, default=DEFAULTS["patch_size"])
    p.add_argument("--count", type=int, default=DEFAULTS["patch_count"])
    p.add_argument("--min-objects", type=int, default=DEFAULTS["min_objects"])
    p.add_argument("--invert", action="store_true", help="invert intensities (255 - p)")
    p.add_argument(
        "--polarity",
        choices=binarize.POLARITIES,
        default=binarize.BRIGHT_FOREGROUND,
        help="foreground convention of the sources, recorded with the run",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rotations", default="0", help="comma list from {0,90,180,270}")
    p.add_argument("--flips", default="none", help="comma list from {none,horizontal,vertical}")
    p.add_argument("--scale-range", default="1.0,1.0", help="lo,hi scale factors")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flag(p)
    registry["preprocess"] = p

    p = subs.add_parser("eval", help="score predicted label maps against ground truth")
    p.add_argument("--pred", help="directory of predicted 16-bit label PNGs")
    p.add_argument("--gt", help="directory of ground-truth 16-bit label PNGs")
    p.add_argument("--manifest", help="CSV of pred_path,gt_path rows for explicit pairing")
    p.add_argument("--metrics", default="aji,pf1,of1", help="subset of aji,pf1,of1 to print")
    p.add_argument("--iou-threshold", type=float, default=DEFAULTS["iou_threshold"])
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flag(p)
    registry["eval"] = p

    p = subs.add_parser("entropy", help="per-pixel prediction entropy map")
    p.add_argument(
        "--prob",
        required=True,
        help="comma list of per-channel PNGs (values/255) or one .npy of HxWxC floats",
    )
    p.add_argument("--out", required=True, help=".csv for float values or .png rescaled by ln C")
    _add_config_flag(p)
    registry["entropy"] = p

    p = subs.add_parser("schedule", help="emit per-step weights and learning rate")
    p.add_argument("--total-steps", type=int, required=True)
    p.add_argument("--beta", type=float, default=float(DEFAULTS["beta"]))
    p.add_argument("--trace", help="CSV of per-step p_s_img,p_s_sem,p_s_ins readouts")
    p.add_argument("--out", required=True, help="schedule CSV path")
    p.add_argument("--base-lr", type=float, default=DEFAULTS["base_lr"])
    p.add_argument("--final-lr", type=float, default=DEFAULTS["final_lr"])
    p.add_argument("--warmup-steps", type=int, default=DEFAULTS["warmup_steps"])
    _add_config_flag(p)
    registry["schedule"] = p

    p = subs.add_parser("netspec", help="validate discriminator/pooling shape chains")
    p.add_argument("--check", choices=["dimg", "dsem", "all"], help="builtin chain(s) to verify")
    p.add_argument("--custom", help="CSV chain: kind,k,s,p,out_channels,target")
    p.add_argument("--input", help="input shape CxHxW for --custom, e.g. 2x256x256")
    _add_config_flag(p)
    registry["netspec"] = p

    return parser, registry


def _apply_config_file(parser, registry, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    sub = registry[args.command]
    known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    overrides = {}
    if not os.path.exists(config_path):
        raise UsageError(f"config file not found: {config_path}")
    with open(config_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{config_path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if key not in known:
                raise UsageError(f"{config_path}:{lineno}: unknown key {key!r}")
            action = known[key]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                if value.lower() not in ("true", "false", "0", "1"):
                    raise UsageError(f"{config_path}:{lineno}: {key} must be true/false")
                overrides[key] = value.lower() in ("true", "1")
            elif action.type is not None:
                try:
                    overrides[key] = action.type(value)
                except ValueError:
                    raise UsageError(f"{config_path}:{lineno}: bad value for {key}: {value!r}")
            else:
                overrides[key] = value
    sub.set_defaults(**overrides)
    # re-parse: explicit flags still win over the file-provided defaults
    return parser.parse_args(argv)


def _log_resolved(args) -> None:
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    log.info("command=%s resolved config: %s", args.command, shown)


def _cmd_inpaint(args) -> int:
    img = load_image(args.image)
    mask = load_mask(args.mask)
    cfg = InpaintConfig(radius=args.radius, use_gradient_term=args.gradient_term)
    cleaned, aux = pipeline.nuclei_inpaint(img, mask, cfg, args.polarity)
    save_image(cleaned, args.out)
    log.info("wrote %s (auxiliary mask covered %d px)", args.out, int(aux.sum()))
    if args.aux_out:
        save_mask(aux, args.aux_out)
        log.info("wrote %s", args.aux_out)
    return 0


def _parse_aug(args) -> pipeline.AugmentationSpec:
    try:
        rotations = tuple(int(r) for r in str(args.rotations).split(",") if r != "")
        flips = tuple(f.strip() for f in args.flips.split(",") if f.strip())
        lo, hi = (float(x) for x in str(args.scale_range).split(","))
    except ValueError as exc:
        raise UsageError(f"bad augmentation flags: {exc}")
    return pipeline.AugmentationSpec(
        rotations=rotations, flips=flips, scale_range=(lo, hi), seed=args.seed
    )


def _paired_pngs(src_dir: str) -> list[tuple[str, str, str]]:
    img_dir = os.path.join(src_dir, "images")
    lab_dir = os.path.join(src_dir, "labels")
    if not os.path.isdir(img_dir) or not os.path.isdir(lab_dir):
        raise ValidationError(f"{src_dir} must contain images/ and labels/ subdirectories")
    imgs = sorted(f for f in os.listdir(img_dir) if f.lower().endswith(".png"))
    labs = sorted(f for f in os.listdir(lab_dir) if f.lower().endswith(".png"))
    orphans = sorted(set(imgs) ^ set(labs))
    if orphans:
        raise ValidationError(f"unpaired source files: {', '.join(orphans)}")
    if not imgs:
        raise ValidationError(f"no source .png pairs under {src_dir}")
    return [(name, os.path.join(img_dir, name), os.path.join(lab_dir, name)) for name in imgs]


def _cmd_preprocess(args) -> int:
    base_aug = _parse_aug(args)
    sources = _paired_pngs(args.src_dir)
    out_img_dir = os.path.join(args.out_dir, "images")
    out_lab_dir = os.path.join(args.out_dir, "labels")
    os.makedirs(out_img_dir, exist_ok=True)
    os.makedirs(out_lab_dir, exist_ok=True)

    generators = []
    n = len(sources)
    for s, (name, img_path, lab_path) in enumerate(sources):
        raw = load_raw(img_path)
        labels = load_labelmap(lab_path)
        img = pipeline.normalize_image(raw)
        if args.invert:
            img = pipeline.invert_foreground(img)
        share = args.count // n + (1 if s < args.count % n else 0)
        if share == 0:
            continue
        child_seed = int(np.random.SeedSequence(args.seed, spawn_key=(s,)).generate_state(1)[0])
        aug = pipeline.AugmentationSpec(
            rotations=base_aug.rotations,
            flips=base_aug.flips,
            scale_range=base_aug.scale_range,
            seed=child_seed,
        )
        gen = pipeline.filter_patches(
            pipeline.extract_patches(img, labels, args.patch_size, share, aug, source=name),
            args.min_objects,
        )
        generators.append(gen)

    def encode(item) -> tuple[int, pipeline.PatchRecord]:
        pid, rec = item
        save_image(rec.image, os.path.join(out_img_dir, f"patch_{pid:05d}.png"))
        save_labelmap(rec.labels, os.path.join(out_lab_dir, f"patch_{pid:05d}.png"))
        return pid, rec

    def round_robin():
        pid = 0
        live = list(generators)
        while live:
            still = []
            for gen in live:
                try:
                    rec = next(gen)
                except StopIteration:
                    continue
                yield pid, rec
                pid += 1
                still.append(gen)
            live = still

    manifest_path = os.path.join(args.out_dir, "manifest.csv")
    kept = 0
    jobs = max(1, args.jobs)
    window: deque = deque()
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patch_id", "source", "offset_y", "offset_x", "augmentation", "object_count"])

        def drain_one():
            nonlocal kept
            pid, rec = window.popleft().result()
            pr = rec.provenance
            writer.writerow(
                [pid, pr.source, pr.offset_y, pr.offset_x, pr.describe(), rec.object_count]
            )
            kept += 1

        # bounded submission keeps the patch stream lazy even with parallel encoders
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for item in round_robin():
                window.append(pool.submit(encode, item))
                if len(window) >= 4 * jobs:
                    drain_one()
            while window:
                drain_one()
    log.info(
        "kept %d of %d patches (min_objects=%d); wrote %s",
        kept, args.count, args.min_objects, manifest_path,
    )
    return 0


def _cmd_eval(args) -> int:
    tokens = [t.strip() for t in args.metrics.split(",") if t.strip()]
    valid = {"aji": "aji", "pf1": "pixel_f1", "of1": "object_f1"}
    for t in tokens:
        if t not in valid:
            raise UsageError(f"unknown metric {t!r}; choose from {sorted(valid)}")
    pairs = None
    if args.manifest:
        pairs = []
        with open(args.manifest, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].lower() in ("pred", "pred_path"):
                    continue
                if len(row) != 2:
                    raise ValidationError(
                        f"{args.manifest}:{lineno}: expected pred_path,gt_path"
                    )
                pairs.append((os.path.basename(row[0]), row[0], row[1]))
    elif not args.pred or not args.gt:
        raise UsageError("eval needs --pred and --gt directories (or --manifest)")
    report = metrics.evaluate_set(
        args.pred, args.gt, iou_threshold=args.iou_threshold, jobs=args.jobs, pairs=pairs
    )
    if args.out:
        report.write_csv(args.out)
        log.info("wrote %s", args.out)
    for t in tokens:
        key = valid[t]
        print(f"{key} mean={report.mean[key]:.6f} std={report.std[key]:.6f}")
    return 0


def _cmd_entropy(args) -> int:
    if args.prob.endswith(".npy"):
        prob = np.load(args.prob)
    else:
        paths = [p for p in args.prob.split(",") if p]
        if len(paths) < 2:
            raise ValidationError("entropy needs at least 2 channel PNGs or an HxWxC .npy")
        channels = [load_raw(p).astype(np.float64) / 255.0 for p in paths]
        prob = np.stack(channels, axis=2)
    ent = metrics.entropy_map(prob)
    if args.out.endswith(".png"):
        scaled = np.floor(ent * (255.0 / np.log(prob.shape[2])) + 0.5)
        save_image(np.clip(scaled, 0, 255).astype(np.uint8), args.out)
    else:
        with open(args.out, "w", newline="") as fh:
            for row in ent:
                fh.write(",".join(f"{v:.9f}" for v in row) + "\n")
    log.info("wrote %s", args.out)
    return 0


def _cmd_schedule(args) -> int:
    trace = None
    if args.trace:
        if not os.path.exists(args.trace):
            raise ValidationError(f"trace file not found: {args.trace}")
        with open(args.trace) as fh:
            trace = schedule.parse_readout_trace(fh)
    rows = schedule.emit_schedule(
        args.total_steps,
        beta=args.beta,
        trace=trace,
        base=args.base_lr,
        final=args.final_lr,
        warmup_steps=args.warmup_steps,
    )
    with open(args.out, "w", newline="") as fh:
        fh.write("step,alpha_img,alpha_ins,alpha_sem,alpha_da,lr\n")
        for step, a_img, a_ins, a_sem, a_da, lr in rows:
            fh.write(f"{step},{a_img:.9f},{a_ins:.9f},{a_sem:.9f},{a_da:.9f},{lr:.9f}\n")
    log.info("wrote %s (%d rows)", args.out, len(rows))
    return 0


def _print_report(report: netspec.ChainReport) -> bool:
    for row in report.rows:
        computed = str(row.computed) if row.computed is not None else "invalid"
        status = "PASS" if row.ok else "FAIL"
        print(f"{report.chain} {row.name}: expected {row.expected} computed {computed} {status}")
    print(f"{report.chain}: {'all rows pass' if report.passed else 'MISMATCH'}")
    return report.passed


def _cmd_netspec(args) -> int:
    if not args.check and not args.custom:
        raise UsageError("netspec needs --check and/or --custom")
    ok = True
    if args.check:
        names = ["DIMG", "DSEM", "IMG_POOL", "INS_FLATTEN"] if args.check == "all" else [
            args.check.upper()
        ]
        for name in names:
            ok = _print_report(netspec.validate_builtin(name)) and ok
    if args.custom:
        if not args.input:
            raise UsageError("--custom needs --input CxHxW")
        try:
            c, h, w = (int(x) for x in args.input.lower().split("x"))
        except ValueError:
            raise UsageError(f"bad --input {args.input!r}; expected CxHxW")
        shape = netspec.TensorShape(c, h, w)
        layers = []
        with open(args.custom, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().lower() == "kind":
                    continue
                if len(row) != 6:
                    raise ValidationError(
                        f"{args.custom}:{lineno}: expected kind,k,s,p,out_channels,target"
                    )
                kind = row[0].strip()
                target = None
                if row[5].strip():
                    th, tw = (int(x) for x in row[5].strip().lower().split("x"))
                    target = (th, tw)
                layers.append(
                    netspec.LayerSpec(
                        kind,
                        k=int(row[1] or 1),
                        s=int(row[2] or 1),
                        p=int(row[3] or 0),
                        out_channels=int(row[4] or 0),
                        target=target,
                    )
                )
        for i, out in enumerate(netspec.chain_shapes(shape, layers)):
            print(f"custom step {i} ({layers[i].kind}): {out}")
    return 0 if ok else 2


_HANDLERS = {
    "inpaint": _cmd_inpaint,
    "preprocess": _cmd_preprocess,
    "eval": _cmd_eval,
    "entropy": _cmd_entropy,
    "schedule": _cmd_schedule,
    "netspec": _cmd_netspec,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(name)s: %(message)s")
    parser, registry = build_parser()
    try:
        args = _apply_config_file(parser, registry, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    _log_resolved(args)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NucleitkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
