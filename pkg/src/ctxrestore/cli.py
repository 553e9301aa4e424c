"""Command-line entry point.

Subcommands: ``outpaint | inpaint | restore | resize | bench | eval``.
Exit codes: 0 success, 1 configuration/input errors, 2 runtime aborts
(non-finite loss).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, NonFiniteLossError, WeightsNotFoundError
from .harness import evaluate_images, run_benchmark, run_single


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("training")
    g.add_argument("--iters", type=int, default=None, help="optimization steps")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", type=Path, default=None,
                   help="base config file; explicit flags override it")
    g.add_argument("--out", type=Path, default=None, help="run directory")
    g.add_argument("--lambda-g", type=float, default=None, dest="lambda_G")
    g.add_argument("--lambda-r", type=float, default=None, dest="lambda_R")
    g.add_argument("--lambda-cal", type=float, default=None, dest="lambda_cal")
    g.add_argument("--lambda-cvl", type=float, default=None, dest="lambda_cvl")
    g.add_argument("--lambda-cyc", type=float, default=None, dest="lambda_cyc")
    g.add_argument("--scales", type=int, default=None, dest="discriminator_scales",
                   help="discriminator scales (1 = single-scale)")
    g.add_argument("--cx-layer", default=None, dest="cx_layer")
    g.add_argument("--cx-bandwidth", type=float, default=None, dest="cx_bandwidth")
    g.add_argument("--cx-epsilon", type=float, default=None, dest="cx_epsilon")
    g.add_argument("--lr-g", type=float, default=None, dest="lr_generator")
    g.add_argument("--lr-d", type=float, default=None, dest="lr_discriminator")
    g.add_argument("--beta1", type=float, default=None)
    g.add_argument("--beta2", type=float, default=None)
    g.add_argument("--no-composite", action="store_true",
                   help="emit the raw generator output instead of compositing")
    g.add_argument("--emit-best", action="store_true",
                   help="emit the lowest-loss snapshot instead of the last iterate")
    g.add_argument("--metrics-on-composite", action="store_true")
    g.add_argument("--mask-channel", action="store_true",
                   help="feed the mask as a fourth generator input channel")
    g.add_argument("--cvl-exclude-masked", action="store_true")
    g.add_argument("--weights-dir", default=None, dest="weights_dir",
                   help="backbone weights cache directory")
    g.add_argument("--no-checkpoint", action="store_true",
                   help="skip writing checkpoint.bin")


_CONFIG_KEYS = (
    "seed", "lambda_G", "lambda_R", "lambda_cal", "lambda_cvl", "lambda_cyc",
    "discriminator_scales", "cx_layer", "cx_bandwidth", "cx_epsilon",
    "lr_generator", "lr_discriminator", "beta1", "beta2", "weights_dir",
)


def _build_config(args, task: str, **extra) -> RunConfig:
    base = RunConfig.from_file(args.config).to_dict() if args.config else {}
    base.pop("task", None)
    overrides = {"task": task, **extra}
    if args.iters is not None:
        overrides["iterations"] = args.iters
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.no_composite:
        overrides["composite_output"] = False
    if args.emit_best:
        overrides["emit_best"] = True
    if args.metrics_on_composite:
        overrides["metrics_on_composite"] = True
    if args.mask_channel:
        overrides["mask_channel"] = True
    if args.cvl_exclude_masked:
        overrides["cvl_exclude_masked"] = True
    return RunConfig.from_dict({**base, **overrides})


def _out_dir(args, config: RunConfig) -> Path:
    if args.out is not None:
        return args.out
    return Path("runs") / f"{config.task}_seed{config.seed}"


def _print_metrics(report) -> None:
    parts = [f"iters={report.iterations_run}", f"wall_s={report.wall_seconds:.1f}"]
    for key in ("ssim", "psnr", "masked_ssim", "zero_fraction"):
        if key in report.metrics:
            parts.append(f"{key}={report.metrics[key]:.4f}")
    parts.append(f"tl_final={report.trace['tl'][-1]:.5g}")
    print("  ".join(parts))


def _cmd_restore_family(args, task: str, **extra) -> int:
    config = _build_config(args, task, **extra)
    out_dir = _out_dir(args, config)
    report = run_single(
        config, args.image, ground_truth_path=args.gt, out_dir=out_dir,
        write_checkpoint=not args.no_checkpoint,
    )
    _print_metrics(report)
    print(f"run dir: {out_dir}")
    return 0


def _cmd_outpaint(args) -> int:
    return _cmd_restore_family(args, "outpaint", mask_fraction=args.fraction)


def _cmd_inpaint(args) -> int:
    return _cmd_restore_family(args, "inpaint", mask_path=str(args.mask))


def _cmd_restore(args) -> int:
    if args.random is None and args.mask is None:
        raise ConfigError("restore requires --random and/or --mask")
    extra = {}
    if args.random is not None:
        if not (0.0 < args.random < 100.0):
            raise ConfigError("--random must be a percentage in (0, 100)")
        extra["mask_fraction"] = args.random / 100.0
    if args.mask is not None:
        task = "restore_wordcloud"
        extra["mask_path"] = str(args.mask)
    else:
        task = "restore_random"
    return _cmd_restore_family(args, task, **extra)


def _cmd_resize(args) -> int:
    config = _build_config(args, "resize", resize_factor=(args.sx, args.sy))
    out_dir = _out_dir(args, config)
    report = run_single(
        config, args.image, out_dir=out_dir,
        write_checkpoint=not args.no_checkpoint,
    )
    _print_metrics(report)
    print(f"run dir: {out_dir}")
    return 0


def _cmd_bench(args) -> int:
    extra = {}
    if args.task == "outpaint":
        if args.fraction is None:
            raise ConfigError("bench outpaint requires --fraction")
        extra["mask_fraction"] = args.fraction
    else:
        if args.random is None:
            raise ConfigError("bench restore_random requires --random")
        extra["mask_fraction"] = args.random / 100.0
    config = _build_config(args, args.task, **extra)
    out_dir = args.out if args.out is not None else Path("bench") / config.task
    summary = run_benchmark(
        args.dataset, config, out_dir=out_dir, workers=args.workers,
        write_checkpoint=not args.no_checkpoint,
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"bench dir: {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    metrics = evaluate_images(args.restored, args.gt, mask_path=args.mask)
    line = "  ".join(f"{k}={v:.4f}" for k, v in metrics.items())
    print(line)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxrestore",
        description="Training-data-free image restoration and synthesis "
                    "by per-image contextual feature learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("outpaint", help="restore removed border columns")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--fraction", type=float, required=True,
                   help="total fraction of columns removed, split per side")
    p.add_argument("--gt", type=Path, default=None, help="ground-truth image")
    _add_train_options(p)
    p.set_defaults(func=_cmd_outpaint)

    p = sub.add_parser("inpaint", help="fill holes given a mask file")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--mask", type=Path, required=True,
                   help="single-channel raster; black = missing")
    p.add_argument("--gt", type=Path, default=None)
    _add_train_options(p)
    p.set_defaults(func=_cmd_inpaint)

    p = sub.add_parser("restore", help="restore randomly removed pixels")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--random", type=float, default=None,
                   help="percentage of pixels to remove at random")
    p.add_argument("--mask", type=Path, default=None,
                   help="extra occlusion mask (word-cloud style), combined "
                        "with the random removal")
    p.add_argument("--gt", type=Path, default=None)
    _add_train_options(p)
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("resize", help="content-aware resize")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--sx", type=float, required=True, help="width scale factor")
    p.add_argument("--sy", type=float, required=True, help="height scale factor")
    _add_train_options(p)
    p.set_defaults(func=_cmd_resize)

    p = sub.add_parser("bench", help="corrupt-and-restore a whole directory")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--task", choices=("outpaint", "restore_random"),
                   default="outpaint")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--random", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    _add_train_options(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("eval", help="recompute metrics from saved images")
    p.add_argument("--restored", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--mask", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None, help="metrics JSON path")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, WeightsNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
