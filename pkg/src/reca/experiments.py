"""Experiment drivers: rule sweep, readout training/evaluation, hardware run, spacetime images."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import weightfile
from .augment import expand_dataset
from .config import ExperimentConfig
from .data import DatasetSplit, subset
from .eca import classify_dynamics, decode_rule, evolve, symmetry_representatives
from .hardware import HwConfig, HwMachine, classify_batched, hw_report
from .readout import (
    ReadoutModel,
    TrainParams,
    error_rate,
    one_hot,
    predict,
    ridge_fit,
    train,
)
from .reservoir import extract_features_batch

logger = logging.getLogger(__name__)

SWEEP_TRAIN = 5000
SWEEP_VAL = 1000
SWEEP_ITERATIONS = 10


class ExperimentError(RuntimeError):
    pass


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


# -- rule sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    rule: int
    val_error: float
    dynamics: str


def fit_readout_lsq(features, labels, lam: float = 1.0, num_classes: int = 10) -> ReadoutModel:
    """Least-squares readout on one-hot targets with a small ridge term.

    Pooled border cells can be constant zero for every sample, which makes
    the plain normal equations singular; ``lam`` keeps them solvable.
    """
    x = features.astype(np.float64) / 255.0
    x = np.hstack([x, np.ones((len(x), 1))])
    theta = ridge_fit(x, one_hot(labels, num_classes), lam)
    return ReadoutModel(theta[:-1] / 255.0, theta[-1].copy())


def sweep_rules(
    split: DatasetSplit,
    iterations: int = SWEEP_ITERATIONS,
    train_count: int = SWEEP_TRAIN,
    val_count: int = SWEEP_VAL,
    method: str = "lsq",
    lam: float = 1.0,
    adam_steps: int = 200,
    seed: int = 0,
    rules=None,
    out_csv: str | Path | None = None,
    progress=None,
) -> list[SweepRow]:
    """Rank non-trivial symmetry representatives by validation error."""
    if method not in ("lsq", "adam"):
        raise ValueError(f"unknown sweep method {method!r}")
    tr_x, tr_y = subset(split.train_images, split.train_labels, train_count)
    va_x, va_y = subset(split.val_images, split.val_labels, val_count)
    candidates = rules if rules is not None else [r.number for r in symmetry_representatives()]
    rows = []
    for rule in candidates:
        dyn = classify_dynamics(rule, seed=seed)
        if dyn.trivial:
            logger.info("rule %d skipped (%s)", rule, dyn.tag.value)
            continue
        f_tr = extract_features_batch(tr_x, rule, iterations)
        f_va = extract_features_batch(va_x, rule, iterations)
        if method == "lsq":
            model = fit_readout_lsq(f_tr, tr_y, lam)
        else:
            params = TrainParams(
                max_steps=adam_steps, batch_size=len(tr_y), quantize=False, seed=seed,
                eval_every=adam_steps, target_val_error=0.0,
            )
            model, _ = train(f_tr, tr_y, params=params)
        row = SweepRow(rule, error_rate(model, f_va, va_y), dyn.tag.value)
        rows.append(row)
        if progress is not None:
            progress(row)
    rows.sort(key=lambda r: (r.val_error, r.rule))
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "rule", "val_error", "dynamics"])
            for i, r in enumerate(rows, 1):
                w.writerow([i, r.rule, f"{r.val_error:.6f}", r.dynamics])
    return rows


def rule_rank(rows: list[SweepRow], rule: int) -> int:
    """1-based rank; ties share the best position."""
    errors = {r.rule: r.val_error for r in rows}
    if rule not in errors:
        raise KeyError(f"rule {rule} not in sweep table")
    return 1 + sum(1 for r in rows if r.val_error < errors[rule])


# -- training and evaluation -----------------------------------------------------


def build_training_set(split: DatasetSplit, config: ExperimentConfig):
    if config.distortion_copies == 0:
        return split.train_images, split.train_labels
    return expand_dataset(split.train_images, split.train_labels, config.distortion_params(), config.distortion_copies)


def write_log_csv(path: Path, log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "batch_loss", "batch_error", "val_error"])
        for step, loss_, berr, verr in log.rows():
            w.writerow([step, f"{loss_:.6f}", f"{berr:.6f}", "" if math.isnan(verr) else f"{verr:.6f}"])


def plot_log(path: Path, log) -> bool:
    """Render batch and validation error curves; skipped when matplotlib is absent."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    steps = np.asarray(log.step)
    val = np.asarray(log.val_error)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, np.asarray(log.batch_error) * 100, lw=0.6, label="mini-batch")
    mask = ~np.isnan(val)
    ax.plot(steps[mask], val[mask] * 100, lw=1.2, label="validation")
    ax.set_xlabel("optimization step")
    ax.set_ylabel("error (%)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def run_train(split: DatasetSplit, config: ExperimentConfig, plot: bool = True, callback=None) -> dict:
    """Train the readout, persist weights and logs, and report test error."""
    out = _out_dir(config)
    t0 = time.perf_counter()
    images, labels = build_training_set(split, config)
    feats = extract_features_batch(images, config.rule, config.M)
    del images
    val_feats = extract_features_batch(split.val_images, config.rule, config.M)
    t_feat = time.perf_counter() - t0
    model, log = train(feats, labels, val_feats, split.val_labels, config.train_params(), callback)
    del feats
    t_train = time.perf_counter() - t0 - t_feat

    weightfile.save(out / "weights.rcw", model)
    write_log_csv(out / "train_log.csv", log)
    plotted = plot and plot_log(out / "train_log.png", log)
    test_feats = extract_features_batch(split.test_images, config.rule, config.M)
    summary = {
        "config": config.to_dict(),
        "train_samples": int(len(labels)),
        "steps": int(log.step[-1]),
        "best_step": int(log.best_step),
        "stopped_early": bool(log.stopped_early),
        "val_error": float(error_rate(model, val_feats, split.val_labels)),
        "test_error": float(error_rate(model, test_feats, split.test_labels)),
        "feature_seconds": round(t_feat, 2),
        "train_seconds": round(t_train, 2),
        "weights": str(out / "weights.rcw"),
        "plot": str(out / "train_log.png") if plotted else None,
    }
    _write_json(out / "summary.json", summary)
    return summary


def run_eval(split: DatasetSplit, weights_path: str | Path, rule: int = 90, iterations: int = 16) -> dict:
    model = weightfile.load(weights_path)
    val = extract_features_batch(split.val_images, rule, iterations)
    test = extract_features_batch(split.test_images, rule, iterations)
    if val.shape[1] != model.num_features:
        raise ExperimentError(f"weights expect {model.num_features} features, extractor gives {val.shape[1]}")
    return {
        "val_error": float(error_rate(model, val, split.val_labels)),
        "test_error": float(error_rate(model, test, split.test_labels)),
        "quantized": model.quantized is not None,
    }


# -- hardware emulation --------------------------------------------------------------


def run_hw(images, labels, weights, iterations: int = 16, rule: int = 90, chunk: int = 1000) -> dict:
    """Classify with the cycle-level machine and compare against the software path."""
    model = weights if isinstance(weights, ReadoutModel) else weightfile.load(weights)
    if model.quantized is None:
        raise ExperimentError("hardware emulation needs quantized (dtype 1) weights")
    if rule != 90:
        raise ExperimentError("the hardware datapath implements rule 90 only")
    images = np.asarray(images, dtype=np.uint8)
    h, w = images.shape[1:]
    config = HwConfig(height=h, width=w, iterations=iterations, num_classes=model.num_classes)
    machine = HwMachine(config, model.quantized)
    hw = classify_batched(machine, images, chunk=chunk)
    sw = predict(model, extract_features_batch(images, rule, iterations))
    report = hw_report(config)
    labels = np.asarray(labels)
    return {
        "samples": int(len(images)),
        "hw_error": float(np.mean(hw.predictions != labels)),
        "sw_error": float(np.mean(sw != labels)),
        "agreement": float(np.mean(hw.predictions == sw)),
        "cycles_per_classification": int(hw.cycles_used),
        "latency_us": hw.cycles_used / config.clock_mhz,
        "report": json.loads(report.to_json()),
    }


# -- spacetime diagrams -------------------------------------------------------------


def spacetime(rule: int, width: int, steps: int, seed: int | None = 0) -> np.ndarray:
    """Evolution raster, step 0 on top; ``seed=None`` starts from a single center cell."""
    if width < 1 or steps < 0:
        raise ValueError("width must be >= 1 and steps >= 0")
    if seed is None:
        row = np.zeros(width, dtype=bool)
        row[width // 2] = True
    else:
        row = np.random.default_rng(seed).integers(0, 2, size=width).astype(bool)
    return evolve(row, decode_rule(rule), steps)


def write_pbm(path: str | Path, raster: np.ndarray) -> None:
    """Plain (P1) PBM: 1 is black."""
    raster = np.asarray(raster, dtype=bool)
    lines = [f"P1\n{raster.shape[1]} {raster.shape[0]}"]
    lines += [" ".join("1" if v else "0" for v in row) for row in raster]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pbm(path: str | Path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines() if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P1":
        raise ValueError("not a plain PBM file")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[3:3 + w * h]], dtype=bool).reshape(h, w)


def render_spacetime(path: str | Path, rule: int, width: int, steps: int, seed: int | None = 0, scale: int = 1) -> np.ndarray:
    """Write a spacetime diagram as PBM or PNG according to the suffix."""
    raster = spacetime(rule, width, steps, seed)
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        pixels = np.where(raster, 0, 255).astype(np.uint8)
        img = Image.fromarray(pixels)
        if scale > 1:
            img = img.resize((raster.shape[1] * scale, raster.shape[0] * scale), Image.NEAREST)
        img.save(path)
    else:
        write_pbm(path, raster)
    return raster
