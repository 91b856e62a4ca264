"""Console entry point: synth / split / ple / eval / train subcommands.

Every command materializes its full configuration (defaults included) into a
flat `key = value` file next to its outputs; pass that file back through
`--config` to reproduce a run bit for bit (flags given on the command line
override the file). Exit codes: 0 success, 2 configuration problem, 3 data
problem, 4 empty result. The PLE_LOG environment variable (debug/info/
warning/error) sets log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, lidar_io, ple, split as split_mod, ssl_mini, synth
from .errors import (
    ConfigError,
    DataError,
    EmptyIndexError,
    EmptyResultError,
    FormatError,
    IoError,
    MissingDataError,
    PlelidarError,
    ShapeError,
)

log = logging.getLogger("plelidar")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EMPTY = 4

TAU_SWEEP = (0.0, 0.5, 0.7, 0.9)


def write_flat(path, pairs: dict) -> None:
    lines = []
    for key in sorted(pairs):
        value = pairs[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = f"{value:.17g}"
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_flat(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv: list) -> None:
    """Load --config values as parser defaults so explicit flags win."""
    config_path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
    if config_path is None:
        return
    values = read_flat(config_path)
    converted = {}
    for action in parser._actions:
        if action.dest not in values:
            continue
        raw = values[action.dest]
        if raw in ("true", "false") and isinstance(action.default, bool):
            converted[action.dest] = raw == "true"
        elif action.type is not None:
            converted[action.dest] = action.type(raw)
        else:
            converted[action.dest] = raw
        # a value from the file satisfies an otherwise mandatory flag
        action.required = False
    parser.set_defaults(**converted)


def _resolved_pairs(args: argparse.Namespace, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def _manifest_lengths(manifest: lidar_io.SequenceManifest) -> dict:
    return {s.sequence_id: s.frame_count for s in manifest.sequences}


def cmd_synth(args) -> int:
    cfg = synth.parse_config(Path(args.config).read_text())
    dataset = synth.generate(cfg)
    out = Path(args.out)
    synth.export(dataset, out)
    (out / "synth.config").write_text(synth.config_to_text(cfg))
    total_points = sum(len(c) for c in dataset.clouds)
    print(f"frames={len(dataset)} points={total_points} out={out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ratio = split_mod.parse_ratio(args.ratio)
    manifest = lidar_io.build_manifest(args.root, args.frequency)
    lengths = _manifest_lengths(manifest)
    if not lengths:
        raise DataError(f"no sequences found under {args.root}")
    result = split_mod.sample_labeled(lengths, ratio, args.mode)
    split_mod.write_split(result, args.out)
    labeled = split_mod.labeled_total(result)
    total = sum(lengths.values())
    write_flat(
        str(args.out) + ".config",
        {
            "root": args.root,
            "ratio": ratio,
            "mode": args.mode,
            "frequency": args.frequency,
            "out": args.out,
        },
    )
    print(f"labeled={labeled} unlabeled={total - labeled} total={total}")
    return EXIT_OK


def _load_split_for(manifest, path) -> dict:
    result = split_mod.read_split(path)
    split_mod.validate_split(result, _manifest_lengths(manifest))
    return result


def cmd_ple(args) -> int:
    manifest = lidar_io.build_manifest(args.root, args.frequency)
    source = ple.ManifestSource(manifest)
    labeled = _load_split_for(manifest, args.split)
    max_distance = None if args.max_distance == float("inf") else args.max_distance
    cfg = ple.PleConfig(
        window_seconds=args.window_seconds,
        max_references=args.max_refs,
        max_distance=max_distance,
        progressive=args.progressive,
    )
    runner = ple.run_progressive if args.progressive else ple.run_naive
    results = runner(source, labeled, cfg, workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_flat(
        out / "ple.config",
        {
            "root": args.root,
            "split": args.split,
            "out": args.out,
            "window_seconds": args.window_seconds,
            "max_refs": args.max_refs,
            "max_distance": args.max_distance,
            "progressive": args.progressive,
            "workers": args.workers,
            "frequency": args.frequency,
        },
    )
    total_unlabeled = sum(
        source.frame_count(s) - len(labeled.get(s, ()))
        for s in source.sequence_ids()
    )
    if not results:
        if total_unlabeled == 0:
            print("frames=0 points=0 (every frame already labeled)")
            return EXIT_OK
        raise EmptyResultError("no unlabeled frame has a labeled frame in its window")
    points = 0
    for (seq, frame), pmap in sorted(results.items()):
        seq_dir = out / seq
        seq_dir.mkdir(parents=True, exist_ok=True)
        ple.write_ple(pmap, seq_dir / f"{frame:06d}{ple.PLE_SUFFIX}")
        points += len(pmap)
    print(f"frames={len(results)} points={points} out={out}")
    return EXIT_OK


def _eval_frames(ple_dir: Path) -> list:
    frames = []
    for seq_dir in sorted(p for p in ple_dir.iterdir() if p.is_dir()):
        for f in sorted(seq_dir.glob(f"*{ple.PLE_SUFFIX}")):
            frames.append((seq_dir.name, int(f.stem), f))
    return frames


def _nearest_labeled_offset(split: dict, seq: str, frame: int) -> int | None:
    frames = split.get(seq)
    if not frames:
        return None
    return min(abs(frame - g) for g in frames)


def cmd_eval(args) -> int:
    if args.group_by_offset and args.split is None:
        raise ConfigError("--group-by-offset needs --split to locate labeled frames")
    manifest = lidar_io.build_manifest(args.root, args.frequency)
    source = ple.ManifestSource(manifest)
    ple_dir = Path(args.ple_dir)
    if not ple_dir.is_dir():
        raise MissingDataError(f"{ple_dir} is not a directory")
    frames = _eval_frames(ple_dir)
    if not frames:
        raise EmptyResultError(f"no {ple.PLE_SUFFIX} files under {ple_dir}")
    split = split_mod.read_split(args.split) if args.split else None

    class_ids: set = set()
    for seq, frame, path in frames:
        gt = source.gt_labels(seq, frame)
        pred = ple.read_ple(path, frame, seq)
        if len(pred) != len(gt):
            raise DataError(
                f"frame {seq}/{frame}: {len(gt)} labeled points vs {len(pred)} estimates"
            )
        class_ids.update(int(c) for c in np.unique(gt.semantic))
        class_ids.update(int(c) for c in np.unique(pred.semantic[pred.valid]))
    class_ids.discard(args.ignore_class)
    if not class_ids:
        raise EmptyResultError("nothing to evaluate outside the ignore class")

    cm = evaluation.ConfusionMatrix(class_ids, args.ignore_class)
    per_frame = []
    for seq, frame, path in frames:
        gt = source.gt_labels(seq, frame)
        pred = ple.read_ple(path, frame, seq)
        evaluation.accumulate(cm, gt, pred)
        if args.group_by_offset:
            offset = _nearest_labeled_offset(split, seq, frame)
            if offset is None or offset == 0:
                continue
            frame_cm = evaluation.ConfusionMatrix(class_ids, args.ignore_class)
            evaluation.accumulate(frame_cm, gt, pred)
            per_frame.append((offset, evaluation.metrics(frame_cm)))

    report = evaluation.metrics(cm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    for fmt in formats:
        suffix = "csv" if fmt == "csv" else "jsonl"
        evaluation.write_report(report, out / f"report.{suffix}", fmt)
    if args.group_by_offset:
        curve = evaluation.interval_curve(per_frame)
        for fmt in formats:
            suffix = "csv" if fmt == "csv" else "jsonl"
            evaluation.write_curve(curve, out / f"curve.{suffix}", fmt)
    write_flat(
        out / "eval.config",
        {
            "root": args.root,
            "ple_dir": args.ple_dir,
            "out": args.out,
            "format": args.format,
            "group_by_offset": args.group_by_offset,
            "split": args.split or "",
            "ignore_class": args.ignore_class,
            "frequency": args.frequency,
        },
    )
    print(f"miou={report.miou:.6f} mprecision={report.mprecision:.6f} frames={len(frames)}")
    return EXIT_OK


def _read_ple_dir(ple_dir) -> dict:
    maps = {}
    for seq, frame, path in _eval_frames(Path(ple_dir)):
        maps[(seq, frame)] = ple.read_ple(path, frame, seq)
    return maps


def cmd_train(args) -> int:
    manifest = lidar_io.build_manifest(args.root, args.frequency)
    source = ple.ManifestSource(manifest)
    labeled = _load_split_for(manifest, args.split)
    ple_maps = _read_ple_dir(args.ple_dir) if args.ple_dir else None
    data = ssl_mini.assemble_training_data(
        source, labeled, ple_maps, max_points=args.max_points, seed=args.seed
    )
    cfg = ssl_mini.SSLConfig(
        lambda_mt=args.lambda_mt,
        tau=args.tau,
        alpha_ema=args.alpha_ema,
        learning_rate=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        hidden=args.hidden,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_flat(
        out / "train.config",
        {
            "root": args.root,
            "split": args.split,
            "ple_dir": args.ple_dir or "",
            "out": args.out,
            "lambda_mt": cfg.lambda_mt,
            "tau": cfg.tau,
            "alpha_ema": cfg.alpha_ema,
            "lr": cfg.learning_rate,
            "steps": cfg.steps,
            "batch_size": cfg.batch_size,
            "hidden": cfg.hidden,
            "seed": cfg.seed,
            "single_branch": args.single_branch,
            "threshold_sweep": args.threshold_sweep,
            "max_points": args.max_points,
            "frequency": args.frequency,
        },
    )
    if args.threshold_sweep:
        rows = []
        for tau in TAU_SWEEP:
            sweep_cfg = ssl_mini.SSLConfig(
                lambda_mt=cfg.lambda_mt, tau=tau, alpha_ema=cfg.alpha_ema,
                learning_rate=cfg.learning_rate, steps=cfg.steps,
                batch_size=cfg.batch_size, hidden=cfg.hidden, seed=cfg.seed,
            )
            _, teacher, _ = ssl_mini.train_loop(data, sweep_cfg, args.single_branch)
            acc = ssl_mini.pseudo_label_accuracy(teacher, data, tau)
            rows.append((tau, acc))
            log.info("sweep tau=%.2f accuracy=%.4f", tau, acc)
        lines = ["tau,pseudo_label_accuracy"]
        lines += [f"{tau:.17g},{acc:.17g}" for tau, acc in rows]
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        print("sweep=" + " ".join(f"{tau:g}:{acc:.4f}" for tau, acc in rows))
        return EXIT_OK
    student, teacher, history = ssl_mini.train_loop(data, cfg, args.single_branch)
    ssl_mini.write_history(history, out / "history.csv")
    ssl_mini.save_model(student, out / "student.model")
    ssl_mini.save_model(teacher, out / "teacher.model")
    final_acc = history[-1][-1] if history else 0.0
    print(f"steps={cfg.steps} final_pseudo_label_accuracy={final_acc:.6f} out={out}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value file with defaults for this command")


def build_parser():
    """Returns (parser, {command: subparser})."""
    parser = argparse.ArgumentParser(
        prog="ple",
        description="Pseudo-label propagation for sequential LiDAR scans",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = commands["synth"] = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset root to create")
    p.set_defaults(func=cmd_synth, needs_config=True)

    p = commands["split"] = sub.add_parser("split", help="pick the labeled subset of frames")
    _add_common(p)
    p.add_argument("--root", required=True, help="dataset root")
    p.add_argument("--ratio", required=True, help="labeled fraction, e.g. 0.005 or 0.5%%")
    p.add_argument("--out", required=True, help="split file to write")
    p.add_argument("--mode", default="global-floor", choices=split_mod.MODES)
    p.add_argument("--frequency", type=float, default=10.0, help="scan rate in Hz")
    p.set_defaults(func=cmd_split)

    p = commands["ple"] = sub.add_parser("ple", help="propagate labels to unlabeled frames")
    _add_common(p)
    p.add_argument("--root", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--progressive", action="store_true", default=False)
    p.add_argument("--window-seconds", type=float, default=1.0)
    p.add_argument("--max-refs", type=int, default=4)
    p.add_argument("--max-distance", type=float, default=float("inf"),
                   help="meters; inf leaves every match valid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--frequency", type=float, default=10.0)
    p.set_defaults(func=cmd_ple)

    p = commands["eval"] = sub.add_parser("eval", help="score estimates against ground truth")
    _add_common(p)
    p.add_argument("--root", required=True)
    p.add_argument("--ple-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="csv", choices=("csv", "json", "both"))
    p.add_argument("--group-by-offset", action="store_true", default=False)
    p.add_argument("--split", default=None)
    p.add_argument("--ignore-class", type=int, default=0)
    p.add_argument("--frequency", type=float, default=10.0)
    p.set_defaults(func=cmd_eval)

    p = commands["train"] = sub.add_parser("train", help="train the dual-head classifier")
    _add_common(p)
    p.add_argument("--root", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--ple-dir", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-mt", type=float, default=250.0)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--alpha-ema", type=float, default=0.99)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--single-branch", action="store_true", default=False)
    p.add_argument("--threshold-sweep", action="store_true", default=False)
    p.add_argument("--max-points", type=int, default=20000)
    p.add_argument("--frequency", type=float, default=10.0)
    p.set_defaults(func=cmd_train)

    return parser, commands


def _configure_logging() -> None:
    level_name = os.environ.get("PLE_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    if argv and argv[0] in commands and argv[0] != "synth":
        try:
            _apply_config_file(commands[argv[0]], argv[1:])
        except (PlelidarError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    args = parser.parse_args(argv)
    if getattr(args, "needs_config", False) and args.config is None:
        print("error: this command requires --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyResultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (
        DataError,
        FormatError,
        MissingDataError,
        IoError,
        EmptyIndexError,
        ShapeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
