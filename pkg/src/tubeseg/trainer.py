"""Deterministic gradient-descent training and end-to-end evaluation.

One step forwards every batch clip on a single tape, aggregates the weighted
loss (including the temporal term between paired clips), runs backward, and
applies a plain SGD update. Temporal pairs are built by cutting a (T+1)-frame
window into two T-frame clips sharing T-1 frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import clip_paste, draw_paste_spec
from .autodiff import Tape, add, constant, mul, slice_axis
from .data.types import ClassTable, TubeAnnotation, VideoClip
from .data.tseg import load_class_table, load_clip, load_manifest
from .errors import ConfigError, ContractError
from .inference import (
    assign_per_pixel,
    clip_result_from_annotation,
    stitch_clips,
    video_truth_from_clips,
)
from .losses import (
    LossReport,
    LossWeights,
    instance_discrimination_loss,
    match_clip,
    pq_style_terms,
    temporal_consistency_loss,
    total_loss,
    tube_id_cross_entropy,
    video_semantic_loss,
)
from .losses.components import depth_loss
from .metrics import MetricReport, evaluate
from .model import ModelConfig, Parameters, init_memory, predict_tubes


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    learning_rate: float = 1e-2
    seed: int = 0
    clip_length: int = 2
    temporal_enabled: bool = False
    clip_paste_enabled: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    grad_clip: float | None = 5.0  # global-norm cap; None disables

    def __post_init__(self):
        if self.temporal_enabled and self.clip_length < 2:
            raise ConfigError("temporal loss needs clip length >= 2 (T-1 overlap)")
        if self.steps < 0 or self.learning_rate < 0:
            raise ConfigError("steps and learning rate must be >= 0")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive or None")


@dataclass
class TrainItem:
    """One batch element: a clip, optionally paired with its successor clip."""

    clip: VideoClip
    ann: TubeAnnotation
    pair_clip: VideoClip | None = None
    pair_ann: TubeAnnotation | None = None


def make_temporal_pair(window_clip: VideoClip, window_ann: TubeAnnotation) -> TrainItem:
    """Cut a (T+1)-frame window into two T-frame clips sharing T-1 frames."""
    frames = window_clip.num_frames
    if frames < 2:
        raise ConfigError("temporal pair needs at least 2 frames")

    def cut(start, stop):
        clip = VideoClip(
            frames=window_clip.frames[start:stop].copy(),
            depth=window_clip.depth[start:stop].copy() if window_clip.depth is not None else None,
            d_max=window_clip.d_max,
        )
        label = window_ann.label_map[start:stop]
        present = set(int(v) for v in np.unique(label)) - {0}
        tubes = [t for t in window_ann.tubes if t.tube_id in present]
        return clip, TubeAnnotation(label_map=label.copy(), tubes=tubes)

    clip_a, ann_a = cut(0, frames - 1)
    clip_b, ann_b = cut(1, frames)
    return TrainItem(clip=clip_a, ann=ann_a, pair_clip=clip_b, pair_ann=ann_b)


def build_items(pairs: list, config: TrainConfig, table: ClassTable) -> list:
    """Batch items from (clip, annotation) pairs cut at the manifest stride."""
    if not config.temporal_enabled:
        return [TrainItem(clip=c, ann=a) for c, a in pairs]
    items = []
    for (clip_a, ann_a), (clip_b, ann_b) in zip(pairs, pairs[1:]):
        item = TrainItem(clip=clip_a, ann=ann_a, pair_clip=clip_b, pair_ann=ann_b)
        items.append(item)
    if not items:
        raise ConfigError("temporal training needs at least two overlapping clips")
    return items


def _clip_losses(params, model_cfg, table, layout, clip, ann, instance_seed):
    forward = predict_tubes(params, model_cfg, clip)
    matching = match_clip(forward, ann, table, layout)
    pos, neg = pq_style_terms(forward, ann, matching)
    components = {
        "pq_pos": pos,
        "pq_neg": neg,
        "tube_id_ce": tube_id_cross_entropy(forward, ann, matching),
        "semantic": video_semantic_loss(forward.semantic_logits, ann, table),
        "instance_disc": instance_discrimination_loss(
            forward.x_v_prime, ann, seed=instance_seed
        ),
    }
    if model_cfg.depth_enabled and clip.depth is not None:
        components["depth"] = depth_loss(
            forward.depth, clip.depth, np.ones_like(clip.depth, dtype=bool)
        )
    return forward, components


def _overlap_logits(forward, side: str):
    t = forward.shape[0]
    if side == "a":
        return slice_axis(forward.tube_logits, 1, 1, t)
    return slice_axis(forward.tube_logits, 1, 0, t - 1)


def train_step(
    params: Parameters,
    batch: list,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    table: ClassTable,
    step: int = 0,
) -> LossReport:
    """One full-batch gradient step; returns the loss report of this step."""
    layout = init_memory(model_cfg)
    batch = list(batch)
    if train_cfg.clip_paste_enabled and len(batch) > 1:
        pasted = []
        for i, item in enumerate(batch):
            source = batch[(i + 1) % len(batch)]
            spec = draw_paste_spec(
                (source.clip, source.ann),
                (item.clip, item.ann),
                seed=hash((train_cfg.seed, step, i)) % (2**32),
                table=table,
            )
            clip, ann = clip_paste(spec)
            pasted.append(TrainItem(clip=clip, ann=ann, pair_clip=item.pair_clip, pair_ann=item.pair_ann))
        batch = pasted

    params.zero_grad()
    sums = {}
    counts = {}
    with Tape() as tape:
        for i, item in enumerate(batch):
            instance_seed = (train_cfg.seed * 1_000_003 + step * 101 + i) % (2**32)
            forward_a, components = _clip_losses(
                params, model_cfg, table, layout, item.clip, item.ann, instance_seed
            )
            if item.pair_clip is not None:
                forward_b, components_b = _clip_losses(
                    params, model_cfg, table, layout, item.pair_clip, item.pair_ann,
                    instance_seed + 1,
                )
                for name in components_b:
                    components[name] = mul(
                        add(components[name], components_b[name]), constant(0.5)
                    )
                if train_cfg.temporal_enabled:
                    components["temporal"] = temporal_consistency_loss(
                        _overlap_logits(forward_a, "a"), _overlap_logits(forward_b, "b")
                    )
            for name, tensor in components.items():
                sums[name] = add(sums[name], tensor) if name in sums else tensor
                counts[name] = counts.get(name, 0) + 1
        averaged = {
            name: mul(tensor, constant(1.0 / counts[name])) for name, tensor in sums.items()
        }
        objective, report = total_loss(averaged, train_cfg.weights)
        for name, value in report.components.items():
            if not np.isfinite(value):
                raise ContractError(f"loss component {name!r} is not finite: {value}")
        if not np.isfinite(report.total):
            raise ContractError(f"total loss is not finite: {report.total}")
        tape.backward(objective)

    lr = train_cfg.learning_rate
    scale = 1.0
    if train_cfg.grad_clip is not None:
        norm_sq = sum(
            float((t.grad * t.grad).sum()) for t in params.tensors() if t.grad is not None
        )
        norm = np.sqrt(norm_sq)
        if norm > train_cfg.grad_clip:
            scale = train_cfg.grad_clip / norm
    for tensor in params.tensors():
        if tensor.grad is not None:
            tensor.data -= lr * scale * tensor.grad
    return report


def train_loop(
    params: Parameters,
    items: list,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    table: ClassTable,
    log_fn=None,
) -> list:
    """Run ``steps`` full-batch updates; returns the per-step reports."""
    reports = []
    for step in range(train_cfg.steps):
        report = train_step(params, items, model_cfg, train_cfg, table, step=step)
        reports.append(report)
        if log_fn is not None:
            log_fn(step, report)
    return reports


def load_dataset(manifest_path):
    """(table, [(clip, annotation)], manifest) for a manifest file."""
    from pathlib import Path

    manifest = load_manifest(manifest_path)
    base = Path(manifest_path).parent
    table = load_class_table(base / manifest.class_table_path)
    pairs = [load_clip(base / rel, table) for rel in manifest.clip_paths]
    return table, pairs, manifest


def evaluate_checkpoint(
    params: Parameters,
    manifest_path,
    model_cfg: ModelConfig,
    threshold: float = 0.7,
    oracle: bool = False,
) -> MetricReport:
    """Inference + stitching + metrics, end to end, against the manifest's truth."""
    table, pairs, _ = load_dataset(manifest_path)
    layout = init_memory(model_cfg)
    results = []
    for clip, ann in pairs:
        if oracle:
            results.append(clip_result_from_annotation(ann, clip))
        else:
            forward = predict_tubes(params, model_cfg, clip)
            results.append(assign_per_pixel(forward, table, layout, threshold))
    video = stitch_clips(results)
    truth = video_truth_from_clips(pairs)
    return evaluate(video, truth, table)
