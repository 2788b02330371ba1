"""Command-line pipeline: gen, train, infer, stitch, eval, gradcheck.

Exit codes: 0 success, 1 domain error, 2 usage error. Every run is
deterministic given --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data.synthetic import generate_synthetic_sequence
from .data.tseg import (
    load_class_table,
    load_manifest,
    save_class_table,
    save_clip,
    save_manifest,
)
from .data.types import DatasetManifest
from .errors import ConfigError, TubesegError
from .inference import (
    assign_per_mask,
    assign_per_pixel,
    clip_result_from_annotation,
    load_clip_result,
    load_video_result,
    save_clip_result,
    save_proposals,
    save_video_result,
    stitch_clips,
    video_truth_from_clips,
)
from .losses import LossWeights
from .metrics import UndefinedMetricError, compute_dq, compute_stq, compute_vpq, evaluate
from .model import (
    ModelConfig,
    init_memory,
    init_params,
    load_params,
    predict_tubes,
    save_params,
)
from .model.config import _KEYS as _MODEL_KEYS
from .trainer import TrainConfig, build_items, evaluate_checkpoint, load_dataset, train_loop

_WEIGHT_KEYS = {
    "w_pq": "pq",
    "w_tube_id": "tube_id",
    "w_sem": "semantic",
    "w_inst": "instance_disc",
    "w_temp": "temporal",
    "w_depth": "depth",
}


def _parse_config_file(path):
    """Split a key=value config file into model fields and loss weights."""
    model_values = {}
    weight_values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
        key, raw = line.split("=", 1)
        key, raw = key.strip(), raw.strip()
        if key in _MODEL_KEYS:
            field, conv = _MODEL_KEYS[key]
            model_values[field] = conv(raw)
        elif key in _WEIGHT_KEYS:
            weight_values[_WEIGHT_KEYS[key]] = float(raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return model_values, weight_values


def _resolve_config(args, table, manifest, has_depth):
    model_values, weight_values = ({}, {})
    if getattr(args, "config", None):
        model_values, weight_values = _parse_config_file(args.config)
    model_values.setdefault("num_classes", len(table))
    model_values.setdefault("stuff_count", len(table.stuff_ids()))
    model_values.setdefault("clip_length", manifest.clip_length)
    model_values.setdefault("depth_enabled", has_depth)
    defaults = ModelConfig.toy()
    for field in ("channels", "memory_size", "latent_size", "num_blocks", "d_max", "seed"):
        model_values.setdefault(field, getattr(defaults, field))
    config = ModelConfig(**model_values)
    if config.num_classes != len(table):
        raise ConfigError(
            f"config D={config.num_classes} but class table has {len(table)} classes"
        )
    if config.stuff_count != len(table.stuff_ids()):
        raise ConfigError(
            f"config stuff_count={config.stuff_count} but table has {len(table.stuff_ids())}"
        )
    return config, LossWeights(**weight_values) if weight_values else LossWeights()


def _cmd_gen(args) -> int:
    height, width = _parse_size(args.size)
    clip_length = args.clip_length or args.frames
    seq = generate_synthetic_sequence(
        seed=args.seed,
        num_frames=args.frames,
        height=height,
        width=width,
        num_things=args.things,
        num_stuff=args.stuff,
        clip_length=clip_length,
        with_depth=args.depth,
        d_max=args.d_max,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (clip, ann) in enumerate(seq.clips):
        name = f"clip_{i:03d}.tseg"
        save_clip(clip, ann, out / name)
        paths.append(name)
    save_class_table(seq.table, out / "classes.txt")
    manifest = DatasetManifest(
        clip_paths=paths, class_table_path="classes.txt", clip_length=clip_length
    )
    save_manifest(manifest, out / "manifest.txt")
    print(f"wrote {len(paths)} clips to {out}")
    return 0


def _parse_size(text: str):
    try:
        w, h = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise ConfigError(f"--size must look like 16x16, got {text!r}") from exc


def _cmd_train(args) -> int:
    table, pairs, manifest = load_dataset(args.manifest)
    has_depth = all(clip.depth is not None for clip, _ in pairs)
    model_cfg, weights = _resolve_config(args, table, manifest, has_depth)
    for flag, name in (
        (args.w_pq, "pq"), (args.w_tube_id, "tube_id"), (args.w_sem, "semantic"),
        (args.w_inst, "instance_disc"), (args.w_temp, "temporal"), (args.w_depth, "depth"),
    ):
        if flag is not None:
            weights = LossWeights(**{**weights.__dict__, name: flag})
    train_cfg = TrainConfig(
        steps=args.steps,
        learning_rate=args.lr,
        seed=args.seed,
        clip_length=manifest.clip_length,
        temporal_enabled=args.temporal,
        clip_paste_enabled=args.clip_paste,
        weights=weights,
    )
    model_cfg = ModelConfig(**{**model_cfg.__dict__, "seed": args.seed})
    params = init_params(model_cfg)
    items = build_items(pairs, train_cfg, table)

    log_lines = []

    def log_fn(step, report):
        log_lines.append(f"{step}\ttotal\t{report.total:.9g}")
        for name, value in report.components.items():
            log_lines.append(f"{step}\t{name}\t{value:.9g}")
        if args.verbose and (step % 50 == 0 or step == train_cfg.steps - 1):
            print(f"step {step}: total {report.total:.5f}")

    train_loop(params, items, model_cfg, train_cfg, table, log_fn=log_fn)
    save_params(params, args.out)
    if args.log:
        Path(args.log).write_text("\n".join(log_lines) + "\n")
    from .model.config import save_config

    if args.save_config:
        save_config(model_cfg, args.save_config)
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    table, pairs, manifest = load_dataset(args.manifest)
    has_depth = all(clip.depth is not None for clip, _ in pairs)
    model_cfg, _ = _resolve_config(args, table, manifest, has_depth)
    params = load_params(args.checkpoint, expected=init_params(model_cfg))
    layout = init_memory(model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    tasks = list(enumerate(pairs))
    if args.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(
                    _infer_one, args.checkpoint, model_cfg, table, i,
                    str(Path(args.manifest)), str(out), args.threshold, args.per_mask,
                )
                for i, _ in tasks
            ]
            for f in futures:
                f.result()
    else:
        for i, (clip, _) in tasks:
            forward = predict_tubes(params, model_cfg, clip)
            _write_result(forward, table, layout, i, out, args.threshold, args.per_mask, model_cfg)
    print(f"wrote {len(tasks)} prediction dumps to {out}")
    return 0


def _infer_one(checkpoint, model_cfg, table, index, manifest_path, out_dir, threshold, per_mask):
    from .data.tseg import load_clip
    from pathlib import Path as _P

    manifest = load_manifest(manifest_path)
    base = _P(manifest_path).parent
    clip, _ = load_clip(base / manifest.clip_paths[index], table)
    params = load_params(checkpoint, expected=init_params(model_cfg))
    layout = init_memory(model_cfg)
    forward = predict_tubes(params, model_cfg, clip)
    _write_result(forward, table, layout, index, _P(out_dir), threshold, per_mask, model_cfg)


def _write_result(forward, table, layout, index, out, threshold, per_mask, model_cfg):
    if per_mask:
        result = assign_per_mask(forward, table, layout)
        save_proposals(result.proposals, forward.shape, out / f"prop_{index:03d}.bin")
    result = assign_per_pixel(forward, table, layout, threshold)
    save_clip_result(result, table, out / f"pred_{index:03d}.tseg", d_max=model_cfg.d_max)


def _cmd_stitch(args) -> int:
    table, pairs, manifest = load_dataset(args.manifest)
    if args.from_truth:
        results = [clip_result_from_annotation(ann, clip) for clip, ann in pairs]
    else:
        pred_dir = Path(args.pred_dir)
        results = [
            load_clip_result(pred_dir / f"pred_{i:03d}.tseg") for i in range(len(pairs))
        ]
    video = stitch_clips(results)
    save_video_result(video, args.out, table=table)
    print(f"stitched {len(results)} clips into {args.out}")
    return 0


def _cmd_eval(args) -> int:
    table, pairs, manifest = load_dataset(args.manifest)
    truth = video_truth_from_clips(pairs)
    pred = load_video_result(args.pred, table)

    lines = []
    if args.metric in ("stq", "all"):
        sq, aq, stq = compute_stq(pred, truth, table)
        lines += [f"sq\t{sq:.6f}", f"aq\t{aq:.6f}", f"stq\t{stq:.6f}"]
    if args.metric in ("vpq", "all"):
        windows = tuple(k for k in (1, 2, 3, 4) if k <= truth.num_frames)
        vpq, per_window = compute_vpq(pred, truth, windows)
        for k in sorted(per_window):
            lines.append(f"vpq@{k}\t{per_window[k]:.6f}")
        lines.append(f"vpq\t{vpq:.6f}")
    if args.metric in ("dstq", "all"):
        if pred.depth is None or truth.depth is None:
            if args.metric == "dstq":
                raise UndefinedMetricError("dstq needs depth in prediction and truth")
        else:
            sq, aq, _ = compute_stq(pred, truth, table)
            dq = compute_dq(pred.depth, truth.depth, args.depth_threshold)
            dstq = (sq * aq * dq) ** (1.0 / 3.0)
            lines += [f"dq\t{dq:.6f}", f"dstq\t{dstq:.6f}"]

    for line in lines:
        key, value = line.split("\t")
        print(f"{key}={value}")
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    from .verification import run_gradient_suite

    results = run_gradient_suite(eps=args.eps)
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err < 1e-4 else "FAIL"
        print(f"{name}\t{err:.3e}\t{status}")
        worst = max(worst, err)
    print(f"max_rel_error={worst:.3e}")
    return 0 if worst < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubeseg",
        description="Desk-scale video tube segmentation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic video dataset")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--frames", type=int, default=8)
    gen.add_argument("--size", default="16x16", help="WxH, e.g. 16x16")
    gen.add_argument("--things", type=int, default=2)
    gen.add_argument("--stuff", type=int, default=1)
    gen.add_argument("--clip-length", type=int, default=None, help="default: whole video")
    gen.add_argument("--depth", action=argparse.BooleanOptionalAction, default=True)
    gen.add_argument("--d-max", type=float, default=20.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=_cmd_gen)

    train = sub.add_parser("train", help="train on a manifest")
    train.add_argument("--manifest", required=True)
    train.add_argument("--config", default=None, help="key=value model config file")
    train.add_argument("--steps", type=int, default=200)
    train.add_argument("--lr", type=float, default=1e-2)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--temporal", action="store_true")
    train.add_argument("--clip-paste", action="store_true")
    train.add_argument("--out", required=True, help="checkpoint path")
    train.add_argument("--log", default=None, help="per-step loss log path")
    train.add_argument("--save-config", default=None, help="write resolved config here")
    train.add_argument("--verbose", action="store_true")
    for flag in ("--w-pq", "--w-tube-id", "--w-sem", "--w-inst", "--w-temp", "--w-depth"):
        train.add_argument(flag, type=float, default=None)
    train.set_defaults(fn=_cmd_train)

    infer = sub.add_parser("infer", help="run clip-level inference")
    infer.add_argument("--manifest", required=True)
    infer.add_argument("--config", default=None)
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--out", required=True)
    infer.add_argument("--threshold", type=float, default=0.7)
    infer.add_argument("--per-mask", action="store_true")
    infer.add_argument("--workers", type=int, default=1)
    infer.set_defaults(fn=_cmd_infer)

    stitch = sub.add_parser("stitch", help="stitch clip predictions into a video")
    stitch.add_argument("--manifest", required=True)
    stitch.add_argument("--pred-dir", default=None)
    stitch.add_argument("--from-truth", action="store_true",
                        help="stitch the ground-truth annotations (oracle bypass)")
    stitch.add_argument("--out", required=True)
    stitch.set_defaults(fn=_cmd_stitch)

    evalp = sub.add_parser("eval", help="evaluate a stitched video result")
    evalp.add_argument("--manifest", required=True)
    evalp.add_argument("--pred", required=True)
    evalp.add_argument("--metric", choices=("stq", "vpq", "dstq", "all"), default="all")
    evalp.add_argument("--depth-threshold", type=float, default=1.25)
    evalp.add_argument("--out", default=None, help="metric<TAB>value report file")
    evalp.set_defaults(fn=_cmd_eval)

    grad = sub.add_parser("gradcheck", help="run the finite-difference suite")
    grad.add_argument("--eps", type=float, default=1e-5)
    grad.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "stitch" and not args.from_truth and not args.pred_dir:
        parser.error("stitch needs --pred-dir or --from-truth")
    try:
        return args.fn(args)
    except TubesegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
