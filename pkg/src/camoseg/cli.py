"""Command-line interface: train, predict, eval, ablate.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Each command writes into ``--out`` and is safe to re-run into a fresh
directory. Reports pair machine-readable CSVs with rendered figures.
"""

import argparse
import csv
import sys
import warnings
from pathlib import Path

from .config import (RunConfig, ConfigError, load_config, from_dict, apply_overrides,
                     to_dict, config_hash)
from .data import IMG_EXTENSIONS, DatasetLayoutError, SampleLoadError, scan_dataset
from .metrics import evaluate_dataset
from .network import VARIANTS, model_from_checkpoint, predict_image, save_prediction_png
from .plots import plot_loss_history, plot_pr_curve, plot_threshold_curves
from .training import ConfigMismatchError, TrainingDiverged, train


def _common_flags(sub):
    sub.add_argument("--config", type=Path, default=None, help="YAML run config")
    sub.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                     help="dotted config override, repeatable (e.g. train.lr=1e-3)")
    sub.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    sub.add_argument("--device", default="cpu")
    sub.add_argument("--out", type=Path, default=None, help="output directory")


def _load_run_config(args, extra_overrides=()):
    overrides = list(args.override) + list(extra_overrides)
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    if args.config is not None:
        return load_config(args.config, overrides)
    return from_dict(apply_overrides({}, overrides))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="camoseg",
        description="Camouflaged object detection: training, inference, evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run config")
    _common_flags(p)
    p.add_argument("--lr", type=float, default=None, help="shorthand for train.lr")
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write prediction maps for a directory of images")
    _common_flags(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("input_dir", type=Path)
    p.add_argument("--threshold", type=float, default=None,
                   help="also write binarized masks at this threshold")
    p.add_argument("--input-size", type=int, default=352)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truths")
    _common_flags(p)
    p.add_argument("pred_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare structural variants")
    _common_flags(p)
    p.add_argument("--variants", nargs="+", default=sorted(VARIANTS),
                   help=f"subset of {sorted(VARIANTS)}")
    p.set_defaults(func=cmd_ablate)

    return parser


def cmd_train(args):
    extra = [f"train.lr={args.lr}"] if args.lr is not None else []
    config = _load_run_config(args, extra)
    if config.data.train_root is None:
        raise ConfigError("data.train_root is required for training")
    manifest = scan_dataset(config.data.train_root)
    val_manifest = (scan_dataset(config.data.val_root, split="val")
                    if config.data.val_root else None)
    out_dir = args.out or Path("runs/train")
    result = train(manifest, config, out_dir, device=args.device,
                   val_manifest=val_manifest, resume_from=args.resume)
    plot_loss_history(result.history, out_dir / "loss.png")
    print(f"final checkpoint: {result.checkpoint}")
    print(f"final total loss: {result.history[-1][6]:.6f}")
    return 0


def cmd_predict(args):
    model, _ = model_from_checkpoint(args.checkpoint, device=args.device)
    out_dir = args.out or Path("predictions")
    out_dir.mkdir(parents=True, exist_ok=True)
    images = sorted(p for p in args.input_dir.iterdir()
                    if p.suffix.lower() in IMG_EXTENSIONS)
    if not images:
        raise DatasetLayoutError(f"no images under {args.input_dir}")
    failures = 0
    for path in images:
        try:
            pred, mask = predict_image(model, path, input_size=args.input_size,
                                       threshold=args.threshold, device=args.device)
        except (SampleLoadError, OSError) as exc:
            warnings.warn(f"skipping unreadable image {path}: {exc}")
            failures += 1
            continue
        save_prediction_png(pred, out_dir / f"{path.stem}.png")
        if mask is not None:
            save_prediction_png(mask.astype(float), out_dir / f"{path.stem}_mask.png")
    print(f"wrote {len(images) - failures} prediction maps to {out_dir}"
          + (f" ({failures} skipped)" if failures else ""))
    return 0


def cmd_eval(args):
    config = _load_run_config(args)
    try:
        report = evaluate_dataset(args.pred_dir, args.gt_dir, config.metrics)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or Path("report")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_per_image_csv(out_dir / "per_image.csv")
    report.write_curve_csv(out_dir / "curves.csv")
    plot_pr_curve(report, out_dir / "pr_curve.png")
    plot_threshold_curves(report, out_dir / "threshold_curves.png")
    print("stem,s_alpha,e_phi_mean,f_beta_mean,f_beta_max,mae")
    print(f"aggregate,{report.s_alpha:.6f},{report.e_phi_mean:.6f},"
          f"{report.f_beta_mean:.6f},{report.f_beta_max:.6f},{report.mae:.6f}")
    if report.missing:
        print(f"warning: {len(report.missing)} stems lacked predictions: "
              + ", ".join(report.missing), file=sys.stderr)
    return 0


def cmd_ablate(args):
    unknown = [v for v in args.variants if v not in VARIANTS]
    if unknown:
        print(f"error: unknown variants {unknown}; choose from {sorted(VARIANTS)}",
              file=sys.stderr)
        return 2
    config = _load_run_config(args) if args.config else RunConfig.desk()
    if args.seed is not None:
        data = apply_overrides(to_dict(config), [f"train.seed={args.seed}"])
        config = from_dict(data)
    if config.data.train_root is None:
        raise ConfigError("data.train_root is required for ablation")
    train_manifest = scan_dataset(config.data.train_root)
    test_root = config.data.test_root or config.data.train_root
    test_manifest = scan_dataset(test_root, split="test")

    out_dir = args.out or Path("runs/ablate")
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = config.train.seed
    rows = []
    for name in args.variants:
        vdata = to_dict(config)
        for key, val in vars(VARIANTS[name]).items():
            vdata["model"]["ablation"][key] = val
        vconfig = from_dict(vdata)
        vdir = out_dir / name
        result = train(train_manifest, vconfig, vdir, device=args.device)
        model, _ = model_from_checkpoint(result.checkpoint, device=args.device)
        pred_dir = vdir / "pred"
        pred_dir.mkdir(exist_ok=True)
        for img_path, _mask in test_manifest.pairs:
            pred, _ = predict_image(model, img_path,
                                    input_size=vconfig.train.input_size,
                                    device=args.device)
            save_prediction_png(pred, pred_dir / f"{Path(img_path).stem}.png")
        report = evaluate_dataset(pred_dir, Path(test_root) / "GT", vconfig.metrics)
        rows.append((name, report.s_alpha, report.e_phi_mean, report.f_beta_mean,
                     report.f_beta_max, report.mae, result.history[-1][6], seed))

    table = out_dir / "ablation.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "s_alpha", "e_phi_mean", "f_beta_mean",
                         "f_beta_max", "mae", "final_loss", "seed"])
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:-1]] + [row[-1]])
    print(f"seed={seed}")
    print("variant,s_alpha,e_phi_mean,f_beta_mean,f_beta_max,mae,final_loss")
    for row in rows:
        print(",".join([row[0]] + [f"{v:.6f}" for v in row[1:-1]]))
    print(f"table: {table}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DatasetLayoutError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 2
    except ConfigMismatchError as exc:
        print(f"resume refused: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures keep exit 1, per contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
