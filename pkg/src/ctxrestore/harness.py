"""Task orchestration: mask synthesis, run directories, and benchmarking.

A run directory is self-describing:
``{config.echo, trace.csv, restored.png, composite.png, checkpoint.bin,
report.json}``; replaying the echoed config on the same platform and
backbone weights reproduces the run bit-exactly.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import masking
from .config import RunConfig, RunReport, TRACE_KEYS, validate_config
from .errors import ConfigError
from .images import load_image, save_image
from .metrics import masked_ssim, psnr, ssim
from .trainer import RestoreLoop, ResizeLoop, report_from_loop, metric_set, save_state

BENCH_COLUMNS = ("image", "task", "seed", "iterations", "ssim", "psnr",
                 "masked_ssim", "wall_s")

_BENCH_TASKS = ("outpaint", "restore_random")


def build_mask(config: RunConfig, dims) -> np.ndarray:
    """Construct the task's mask for an image of the given (H, W)."""
    h, w = dims
    if config.task == "outpaint":
        return masking.make_outpaint_mask(h, w, config.mask_fraction)
    if config.task == "restore_random":
        return masking.make_random_mask(h, w, config.mask_fraction * 100.0, config.seed)
    if config.task == "inpaint":
        return masking.load_mask(config.mask_path, dims)
    if config.task == "restore_wordcloud":
        mask = masking.load_mask(config.mask_path, dims)
        if config.mask_fraction is not None:
            random_part = masking.make_random_mask(
                h, w, config.mask_fraction * 100.0, config.seed
            )
            mask = masking.combine_masks(mask, random_part)
        return mask
    raise ConfigError(f"task '{config.task}' does not define a mask")


def write_trace_csv(report: RunReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iteration",) + TRACE_KEYS)
        for i in range(report.iterations_run):
            writer.writerow(
                [i] + [f"{report.trace[k][i]:.10g}" for k in TRACE_KEYS]
            )


def write_run_dir(out_dir, config: RunConfig, report: RunReport,
                  restored: np.ndarray, composited: Optional[np.ndarray],
                  state=None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.to_file(out_dir / "config.echo")
    write_trace_csv(report, out_dir / "trace.csv")
    save_image(restored, out_dir / "restored.png")
    report.outputs["restored"] = str(out_dir / "restored.png")
    if composited is not None:
        save_image(composited, out_dir / "composite.png")
        report.outputs["composite"] = str(out_dir / "composite.png")
    if state is not None:
        save_state(state, out_dir / "checkpoint.bin")
        report.outputs["checkpoint"] = str(out_dir / "checkpoint.bin")
    report.to_file(out_dir / "report.json")
    return out_dir


def run_single(config: RunConfig, image_path, ground_truth_path=None,
               out_dir="run", write_checkpoint: bool = True) -> RunReport:
    """Load an image, corrupt it per the task, train, persist the run."""
    config = validate_config(config)
    image = load_image(image_path)
    ground_truth = (
        load_image(ground_truth_path) if ground_truth_path is not None else None
    )
    inputs = {"input_image": str(image_path)}
    if ground_truth_path is not None:
        inputs["ground_truth"] = str(ground_truth_path)

    t0 = time.perf_counter()
    if config.task == "resize":
        loop = ResizeLoop(image, config)
        loop.run(config.iterations)
        report = report_from_loop(loop, time.perf_counter() - t0)
        restored, composited = loop.output(), None
        mask = None
    else:
        mask = build_mask(config, image.shape[:2])
        source = masking.corrupt(image, mask)
        loop = RestoreLoop(source, mask, config)
        loop.run(config.iterations)
        report = report_from_loop(loop, time.perf_counter() - t0)
        restored = loop.output(composite=False)
        composited = masking.composite(restored, source, mask)
        if ground_truth is not None:
            report.metrics = metric_set(
                restored, composited, ground_truth, mask,
                config.metrics_on_composite,
            )
        report.metrics["zero_fraction"] = masking.zero_fraction(mask)
    report.outputs.update(inputs)
    state = loop.state() if write_checkpoint else None
    write_run_dir(out_dir, config, report.check(), restored, composited, state)
    return report


def _bench_one(args):
    image_path, config_dict, out_root, write_checkpoint = args
    config = RunConfig.from_dict(config_dict)
    try:
        report = run_single(
            config, image_path, ground_truth_path=image_path,
            out_dir=Path(out_root) / Path(image_path).stem,
            write_checkpoint=write_checkpoint,
        )
        row = {
            "image": Path(image_path).name,
            "task": config.task,
            "seed": config.seed,
            "iterations": config.iterations,
            "ssim": report.metrics.get("ssim", ""),
            "psnr": report.metrics.get("psnr", ""),
            "masked_ssim": report.metrics.get("masked_ssim", ""),
            "wall_s": round(report.wall_seconds, 3),
        }
        return row, None
    except Exception as exc:  # per-image failures must not sink the run
        return {
            "image": Path(image_path).name,
            "task": config.task,
            "seed": config.seed,
            "iterations": config.iterations,
            "ssim": "", "psnr": "", "masked_ssim": "", "wall_s": "",
        }, f"{type(exc).__name__}: {exc}"


def run_benchmark(dataset_dir, config: RunConfig, out_dir="bench",
                  workers: int = 1, write_checkpoint: bool = False) -> dict:
    """Corrupt-and-restore every image in a directory; aggregate metrics.

    Writes ``bench.csv`` (one row per image plus a mean row over the
    successes) and ``summary.json``. Per-image failures are recorded and
    surfaced in the summary, not raised.
    """
    config = validate_config(config)
    if config.task not in _BENCH_TASKS:
        raise ConfigError(
            f"benchmark supports synthesizable corruptions {_BENCH_TASKS}, "
            f"not '{config.task}'"
        )
    dataset_dir = Path(dataset_dir)
    images = sorted(
        p for p in dataset_dir.iterdir()
        if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")
    ) if dataset_dir.is_dir() else []
    if not images:
        raise ConfigError(f"no images found in {dataset_dir}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), config.to_dict(), str(out_dir), write_checkpoint)
            for p in images]
    if workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(workers) as pool:
            results = pool.map(_bench_one, jobs)
    else:
        results = [_bench_one(job) for job in jobs]

    rows = [row for row, _ in results]
    failures = {row["image"]: err for row, err in results if err is not None}
    ok_rows = [row for row, err in results if err is None]

    def _mean(key):
        values = [float(r[key]) for r in ok_rows if r[key] != ""]
        return round(float(np.mean(values)), 6) if values else ""

    mean_row = {
        "image": "mean", "task": config.task, "seed": config.seed,
        "iterations": config.iterations,
        "ssim": _mean("ssim"), "psnr": _mean("psnr"),
        "masked_ssim": _mean("masked_ssim"), "wall_s": _mean("wall_s"),
    }
    with open(out_dir / "bench.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows + [mean_row]:
            writer.writerow(row)

    summary = {
        "task": config.task,
        "n_images": len(images),
        "n_failures": len(failures),
        "failures": failures,
        "mean_ssim": mean_row["ssim"],
        "mean_psnr": mean_row["psnr"],
        "mean_masked_ssim": mean_row["masked_ssim"],
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def evaluate_images(restored_path, ground_truth_path, mask_path=None) -> dict:
    """Recompute metrics from saved images, without retraining."""
    restored = load_image(restored_path)
    ground_truth = load_image(ground_truth_path)
    out = {"psnr": psnr(restored, ground_truth)}
    if min(ground_truth.shape[:2]) >= 11:
        out["ssim"] = ssim(restored, ground_truth)
        if mask_path is not None:
            mask = masking.load_mask(mask_path, ground_truth.shape[:2])
            if (mask == 0).any():
                out["masked_ssim"] = masked_ssim(restored, ground_truth, mask)
    return out
