"""Command-line entry point: ``reca <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import weightfile
from .config import ExperimentConfig
from .data import load_split
from .idx import load_idx, write_idx
from .readout import quantize_weights


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    """One flag per ExperimentConfig field, named after it."""
    defaults = ExperimentConfig()
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        value = getattr(defaults, f.name)
        if isinstance(value, bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            kind = type(value) if value is not None else str
            p.add_argument(flag, dest=f.name, type=kind, default=None)
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")


def _config(args) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if getattr(args, "config", None) else {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    return ExperimentConfig.from_dict(data)


def _split(config: ExperimentConfig):
    return load_split(config.data_dir, config.validation_size, shuffle_seed=config.seed if config.shuffle_split else None)


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=float))


def cmd_sweep(args) -> None:
    from .experiments import rule_rank, sweep_rules

    config = _config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_rules(
        _split(config),
        iterations=args.iterations,
        train_count=args.train_count,
        val_count=args.val_count,
        method=args.method,
        lam=args.lam,
        seed=config.seed,
        rules=args.rules,
        out_csv=out / "sweep.csv",
    )
    payload = {"csv": str(out / "sweep.csv"), "top": [dataclasses.asdict(r) for r in rows[:10]]}
    if any(r.rule == 90 for r in rows):
        payload["rank_rule90"] = rule_rank(rows, 90)
    _emit(payload)


def cmd_extract(args) -> None:
    from .reservoir import extract_features_batch

    config = _config(args)
    images = load_idx(args.images)
    if images.ndim == 2:
        images = images[None]
    feats = extract_features_batch(images, config.rule, config.M)
    np.save(args.output, feats)
    _emit({"output": str(args.output), "shape": list(feats.shape)})


def cmd_train(args) -> None:
    from .experiments import run_train

    config = _config(args)
    Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    (Path(config.out_dir) / "config.json").write_text(config.to_json() + "\n")
    _emit(run_train(_split(config), config, plot=not args.no_plot))


def cmd_eval(args) -> None:
    from .experiments import run_eval

    config = _config(args)
    _emit(run_eval(_split(config), args.weights, config.rule, config.M))


def cmd_quantize(args) -> None:
    model = weightfile.load(args.weights)
    if model.quantized is not None:
        raise ValueError("weights are already quantized")
    mode = args.quant_mode or "per_column"
    weightfile.save(args.output, quantize_weights(model, mode))
    _emit({"output": str(args.output), "mode": mode})


def cmd_hw_sim(args) -> None:
    from .experiments import run_hw

    config = _config(args)
    split = _split(config)
    images, labels = split.test_images, split.test_labels
    if args.limit:
        images, labels = images[: args.limit], labels[: args.limit]
    result = run_hw(images, labels, args.weights, config.M, config.rule)
    if args.trace:
        from .hardware import HwConfig, HwMachine, hw_classify

        model = weightfile.load(args.weights)
        h, w = images.shape[1:]
        with open(args.trace, "w") as fh:
            machine = HwMachine(HwConfig(height=h, width=w, iterations=config.M), model.quantized, trace=fh)
            hw_classify(machine, images[0])
        result["trace"] = str(args.trace)
    _emit(result)


def cmd_distort(args) -> None:
    from .augment import elastic_distort, expand_dataset

    config = _config(args)
    images = load_idx(args.images)
    params = config.distortion_params()
    if images.ndim == 2:
        out = elastic_distort(images, params)
    else:
        copies = config.distortion_copies
        out, _ = expand_dataset(images, np.zeros(len(images), dtype=np.uint8), params, copies)
    write_idx(args.output, out)
    _emit({"output": str(args.output), "shape": list(out.shape)})


def cmd_spacetime(args) -> None:
    from .experiments import render_spacetime

    config = _config(args)
    seed = None if args.center else config.seed
    raster = render_spacetime(args.output, config.rule, args.width, args.steps, seed, args.scale)
    _emit({"output": str(args.output), "shape": list(raster.shape)})


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message, "command": self.prog}) + "\n")
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="reca", description="Cellular-automaton reservoir classifier tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="rank non-trivial rules by validation error")
    _add_config_flags(p)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--train-count", type=int, default=5000)
    p.add_argument("--val-count", type=int, default=1000)
    p.add_argument("--method", choices=["lsq", "adam"], default="lsq")
    p.add_argument("--lam", type=float, default=1.0, help="ridge term for the least-squares fit")
    p.add_argument("--rules", type=int, nargs="*", help="restrict to these rules")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("extract", help="write reservoir features of an IDX image file to .npy")
    _add_config_flags(p)
    p.add_argument("images", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the readout and write weights, logs and summary")
    _add_config_flags(p)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a weight file on validation and test sets")
    _add_config_flags(p)
    p.add_argument("weights", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("quantize", help="convert float weights to int8 weights")
    p.add_argument("weights", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--quant-mode", choices=["per_column", "global"])
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("hw-sim", help="run the cycle-level hardware model on the test set")
    _add_config_flags(p)
    p.add_argument("weights", type=Path)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--trace", type=Path, help="write a per-cycle register trace of the first image")
    p.set_defaults(func=cmd_hw_sim)

    p = sub.add_parser("distort", help="elastically distort an IDX image file")
    _add_config_flags(p)
    p.add_argument("images", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("spacetime", help="render an evolution diagram (.pbm or .png)")
    _add_config_flags(p)
    p.add_argument("output", type=Path)
    p.add_argument("--width", type=int, default=101)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--center", action="store_true", help="start from a single center cell")
    p.add_argument("--scale", type=int, default=1)
    p.set_defaults(func=cmd_spacetime)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except Exception as exc:  # reported as JSON, never a traceback
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
