"""Command-line entry point.

Subcommands: dataset (pair generation), speckle (single-image debug synth),
reconstruct-er (phase retrieval), tomo (three-view recombination) and eval
(metric reports). Every subcommand is deterministic given its flags; logs go
to stderr, data to files. Exit codes: 0 success, 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import metrics, pngio, tomo
from .retrieval import ERConfig, reconstruct_from_speckle
from .shapes import ALL_FAMILIES, Family, IDENTITY_POSE, default_object_grid, sample_shape, sample_valid_pose
from .speckle import NoiseConfig, OpticsConfig, add_noise, sample_asperities, synthesize_speckle

log = logging.getLogger("ipishape")


class UsageError(Exception):
    pass


def _parse_families(text: str) -> tuple[Family, ...]:
    try:
        return tuple(Family(tok.strip().lower()) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise UsageError(f"unknown family in {text!r}: {exc}") from exc


def _parse_range(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"expected 'min,max', got {text!r}")
    return float(parts[0]), float(parts[1])


def _read_config_file(path: str) -> dict:
    """Line-oriented key=value defaults; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_dataset(args) -> int:
    noise = NoiseConfig(
        gaussian_sigma_rel=args.noise_gaussian_rel,
        shot_scale=args.noise_shot_scale,
        quantize_bits=args.noise_quantize_bits,
    )
    try:
        config = ds.DatasetConfig(
            count=args.count,
            families=_parse_families(args.families),
            size_range_um=_parse_range(args.size_range),
            density=args.density,
            noise=noise,
            master_seed=args.seed,
            split_ratio=args.split_ratio,
            optics=OpticsConfig(image_n=args.image_n, object_n=args.object_n),
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    t0 = time.monotonic()
    manifest = ds.generate_dataset(config, args.out)
    log.info(
        "wrote %d pairs (%d train / %d test) to %s in %.1f s",
        manifest.count,
        len(manifest.ids("train")),
        len(manifest.ids("test")),
        args.out,
        time.monotonic() - t0,
    )
    return 0


def cmd_speckle(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    family = _parse_families(args.family)[0]
    spec = sample_shape(family, (args.size, args.size), args.seed)
    grid = default_object_grid(args.size, n=args.object_n)
    if args.identity_pose:
        from .shapes import rasterize_projection

        pose, mask = IDENTITY_POSE, rasterize_projection(spec, IDENTITY_POSE, grid)
    else:
        pose, mask = sample_valid_pose(spec, grid, args.seed)
    asp = sample_asperities(mask, args.density, args.seed)
    img = synthesize_speckle(asp, OpticsConfig(image_n=args.image_n, object_n=args.object_n))
    img = add_noise(
        img,
        NoiseConfig(
            gaussian_sigma_rel=args.noise_gaussian_rel,
            shot_scale=args.noise_shot_scale,
            quantize_bits=args.noise_quantize_bits,
            seed=args.seed,
        ),
    )
    scale = pngio.speckle_scale(img)
    pngio.write_mask_png(out / "mask.png", mask)
    pngio.write_speckle_png(out / "speckle.png", img, scale)
    meta = {
        "family": family.value,
        "feret_um": spec.feret_um,
        "params": spec.params,
        "quaternion": pose.quaternion,
        "asperity_count": asp.count,
        "png_scale": scale,
        "seed": args.seed,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("wrote mask.png, speckle.png, meta.json to %s", out)
    return 0


def _er_config(args) -> ERConfig:
    try:
        return ERConfig(
            iterations=args.iterations,
            support_threshold_rel=args.support_threshold,
            init_seed=args.init_seed,
            binarize_method=args.binarize,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_reconstruct_er(args) -> int:
    if (args.image is None) == (args.dataset is None):
        raise UsageError("pass exactly one of --image or --dataset with --id")
    config = _er_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.image is not None:
        path = Path(args.image)
        if not path.exists():
            raise UsageError(f"input image not found: {path}")
        img = np.asarray(__import__("PIL.Image", fromlist=["Image"]).open(path), dtype=np.float64)
        stem = path.stem
    else:
        if args.id is None:
            raise UsageError("--dataset requires --id")
        try:
            img, _ = ds.read_pair(args.dataset, args.id)
        except (ds.CorruptDatasetError, KeyError) as exc:
            raise UsageError(str(exc)) from exc
        stem = f"{args.id:06d}"
    t0 = time.monotonic()
    output = reconstruct_from_speckle(img, config)
    log.info(
        "error reduction: %d iterations, final E_F %.3g, %.2f s",
        output.result.iterations_run,
        output.result.error_trace[-1],
        time.monotonic() - t0,
    )
    pngio.write_mask_png(out / f"{stem}.png", output.mask)
    with open(out / f"{stem}.trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "e_f"])
        for i, e in enumerate(output.result.error_trace):
            writer.writerow([i, repr(float(e))])
    return 0


def cmd_tomo(args) -> int:
    masks = {}
    for axis, path in (("xy", args.xy), ("yz", args.yz), ("zx", args.zx)):
        p = Path(path)
        if not p.exists():
            raise UsageError(f"mask file not found: {p}")
        masks[axis] = pngio.read_mask_png(p)
    shapes = {axis: m.shape for axis, m in masks.items()}
    if len(set(shapes.values())) != 1 or masks["xy"].shape[0] != masks["xy"].shape[1]:
        raise UsageError(f"masks must be square and equal-sized, got {shapes}")
    for axis, m in masks.items():
        if not m.any():
            log.warning("input mask %s is empty; the hull will be empty", axis)
    result = tomo.recombine(masks["xy"], masks["yz"], masks["zx"], register=not args.no_register)
    out = Path(args.out)
    (out / "slices").mkdir(parents=True, exist_ok=True)
    n = result.hull.shape[0]
    for z in range(n):
        pngio.write_mask_png(out / "slices" / f"z{z:03d}.png", result.hull[:, :, z])
    tomo.write_runs(result.hull, out / "hull.runs.txt")
    for axis in ("xy", "yz", "zx"):
        pngio.write_mask_png(out / f"reproject_{axis}.png", tomo.reproject(result.hull, axis))
    meta = {
        "n": n,
        "occupied": int(result.hull.sum()),
        "registered": not args.no_register,
        "shifts": result.shifts,
        "reflections": result.reflections,
        "consistency": result.consistency,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("hull: %d voxels occupied; consistency %.3f", meta["occupied"], result.consistency)
    return 0


def _prediction_sets(pred_dir: Path) -> dict[str, dict[int, Path]]:
    """Map method -> {id -> png path}. Method subdirectories if present,
    otherwise the directory itself (named after its basename)."""
    sets: dict[str, dict[int, Path]] = {}
    subdirs = [d for d in sorted(pred_dir.iterdir()) if d.is_dir()]
    groups = [(d.name, d) for d in subdirs] if subdirs else [(pred_dir.name, pred_dir)]
    for method, d in groups:
        files = {int(p.stem): p for p in sorted(d.glob("*.png")) if p.stem.isdigit()}
        if files:
            sets[method] = files
    return sets


def cmd_eval(args) -> int:
    dataset_dir = Path(args.manifest)
    if dataset_dir.is_file():
        dataset_dir = dataset_dir.parent
    try:
        manifest = ds.load_manifest(dataset_dir)
    except ds.CorruptDatasetError as exc:
        raise UsageError(str(exc)) from exc
    pred_dir = Path(args.pred)
    if not pred_dir.is_dir():
        raise UsageError(f"predictions directory not found: {pred_dir}")
    sets = _prediction_sets(pred_dir)
    if not sets:
        raise UsageError(f"no prediction PNGs found under {pred_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method, files in sets.items():
        diff_dir = out / "diff" / method
        diff_dir.mkdir(parents=True, exist_ok=True)
        for sample_id, path in sorted(files.items()):
            try:
                rec = manifest.record(sample_id)
            except KeyError:
                log.warning("prediction %s has no manifest record; skipped", path)
                continue
            _, truth = ds.read_pair(dataset_dir, sample_id, manifest)
            pred = pngio.read_mask_png(path)
            if pred.shape != truth.shape:
                from .speckle import embed_mask

                if pred.shape[0] > truth.shape[0]:
                    truth = embed_mask(truth, pred.shape[0])
                else:
                    pred = embed_mask(pred, truth.shape[0])
            aligned, tf = metrics.best_aligned_iou(pred, truth)
            rows.append(
                {
                    "id": sample_id,
                    "family": rec.family,
                    "method": method,
                    "iou": metrics.iou(pred, truth),
                    "aligned_iou": aligned,
                    "mse": metrics.mse(pred, truth),
                    "transform": str(tf),
                }
            )
            diff8 = metrics.render_difference(metrics.difference_image(truth, metrics.apply_transform(pred, tf)))
            pngio.write_gray_png(diff_dir / f"{sample_id:06d}.png", diff8)
    if not rows:
        raise UsageError("no predictions matched manifest records")
    metrics.write_report(rows, out / "report.csv")
    metrics.write_aggregate_report(rows, out / "aggregate.csv")
    log.info("wrote %d rows to %s", len(rows), out / "report.csv")
    return 0


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise-gaussian-rel", type=float, default=0.0, help="gaussian sigma as a fraction of the image mean")
    p.add_argument("--noise-shot-scale", type=float, default=0.0, help="photons at image max for shot noise (0 = off)")
    p.add_argument("--noise-quantize-bits", type=int, default=0, choices=(0, 8, 16), help="midtread quantization depth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipishape", description=__doc__)
    parser.add_argument("--config", default=None, help="key=value defaults file; flags override")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="generate a (speckle, mask) pair dataset")
    p.add_argument("--count", type=int, required=True, help="number of pairs")
    p.add_argument("--families", default=",".join(f.value for f in ALL_FAMILIES))
    p.add_argument("--size-range", default="370,1500", help="feret range in um, 'min,max'")
    p.add_argument("--density", type=float, default=0.5, help="asperity density inside the contour")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--split-ratio", type=float, default=0.9)
    p.add_argument("--image-n", type=int, default=256)
    p.add_argument("--object-n", type=int, default=128)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_noise_flags(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("speckle", help="synthesize one particle + speckle image")
    p.add_argument("--family", default="stick")
    p.add_argument("--size", type=float, default=1000.0, help="feret diameter in um")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--identity-pose", action="store_true")
    p.add_argument("--image-n", type=int, default=256)
    p.add_argument("--object-n", type=int, default=128)
    p.add_argument("--out", required=True)
    _add_noise_flags(p)
    p.set_defaults(func=cmd_speckle)

    p = sub.add_parser("reconstruct-er", help="error-reduction phase retrieval")
    p.add_argument("--image", default=None, help="speckle PNG (raw 16-bit values are used as-is)")
    p.add_argument("--dataset", default=None, help="dataset directory (with --id)")
    p.add_argument("--id", type=int, default=None)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--support-threshold", type=float, default=0.04)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--binarize", choices=("fixed", "otsu"), default="fixed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct_er)

    p = sub.add_parser("tomo", help="recombine three orthogonal masks into a voxel hull")
    p.add_argument("--xy", required=True)
    p.add_argument("--yz", required=True)
    p.add_argument("--zx", required=True)
    p.add_argument("--no-register", action="store_true", help="skip centering/reflection registration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tomo)

    p = sub.add_parser("eval", help="score prediction masks against a dataset")
    p.add_argument("--manifest", required=True, help="dataset directory or manifest path")
    p.add_argument("--pred", required=True, help="directory of prediction PNGs (or method subdirs)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            defaults = _read_config_file(args.config)
            known = {a.dest for a in parser._actions}
            for sp in (p for a in parser._actions if isinstance(a, argparse._SubParsersAction) for p in a.choices.values()):
                known |= {a.dest for a in sp._actions}
            bad = set(defaults) - known
            if bad:
                raise UsageError(f"unknown config keys: {sorted(bad)}")
            # re-parse with config values as defaults so explicit flags win
            for a in parser._actions:
                if isinstance(a, argparse._SubParsersAction):
                    for sp in a.choices.values():
                        sp.set_defaults(**{k: _coerce_default(sp, k, v) for k, v in defaults.items()})
            args = parser.parse_args(argv)
        log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse's own usage failures
        return int(exc.code or 0)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        log.error("%s", exc, exc_info=log.level <= logging.DEBUG)
        return 1


def _coerce_default(subparser: argparse.ArgumentParser, key: str, value: str):
    for action in subparser._actions:
        if action.dest == key and action.type is not None:
            return action.type(value)
        if action.dest == key and isinstance(action.default, bool):
            return value.lower() in ("1", "true", "yes")
    return value


if __name__ == "__main__":
    sys.exit(main())
