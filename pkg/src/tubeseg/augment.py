"""Clip-level copy-paste: transplant whole tubes between clips.

Pasted tubes land on top of the target across all frames; occluded target
tubes are clipped, fully covered ones deleted, and a pasted stuff tube merges
with (replaces) an existing same-class stuff tube so stuff uniqueness holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data.types import ClassTable, TubeAnnotation, TubeEntry, VideoClip
from .errors import AugmentationError

APPLY_PROBABILITY = 0.5


@dataclass
class PasteSpec:
    source_clip: VideoClip
    source_ann: TubeAnnotation
    target_clip: VideoClip
    target_ann: TubeAnnotation
    selected_tube_ids: list
    apply: bool
    seed: int = 0
    table: ClassTable | None = None


def draw_paste_spec(source, target, seed: int, table: ClassTable | None = None) -> PasteSpec:
    """Seeded random spec: apply with probability 0.5, each tube chosen at 0.5.

    ``source`` and ``target`` are (VideoClip, TubeAnnotation) pairs. When
    apply is drawn true but no tube is selected, one is forced so the paste
    is never a silent no-op.
    """
    rng = np.random.default_rng(seed)
    apply = bool(rng.random() < APPLY_PROBABILITY)
    source_clip, source_ann = source
    target_clip, target_ann = target
    selected = [t.tube_id for t in source_ann.tubes if rng.random() < 0.5]
    if apply and not selected and source_ann.tubes:
        selected = [source_ann.tubes[int(rng.integers(len(source_ann.tubes)))].tube_id]
    return PasteSpec(
        source_clip=source_clip,
        source_ann=source_ann,
        target_clip=target_clip,
        target_ann=target_ann,
        selected_tube_ids=selected,
        apply=apply,
        seed=seed,
        table=table,
    )


def _copy_clip(clip: VideoClip) -> VideoClip:
    return VideoClip(
        frames=clip.frames.copy(),
        depth=clip.depth.copy() if clip.depth is not None else None,
        d_max=clip.d_max,
    )


def _copy_ann(ann: TubeAnnotation) -> TubeAnnotation:
    return TubeAnnotation(label_map=ann.label_map.copy(), tubes=list(ann.tubes))


def clip_paste(spec: PasteSpec) -> tuple:
    """Composite (VideoClip, TubeAnnotation); identity when apply is false."""
    src_clip, src_ann = spec.source_clip, spec.source_ann
    tgt_clip, tgt_ann = spec.target_clip, spec.target_ann
    if src_clip.frames.shape != tgt_clip.frames.shape:
        raise AugmentationError(
            f"source {src_clip.frames.shape} and target {tgt_clip.frames.shape} differ"
        )
    if (src_clip.depth is None) != (tgt_clip.depth is None):
        raise AugmentationError("source and target must agree on depth presence")
    if src_clip.depth is not None and src_clip.d_max != tgt_clip.d_max:
        raise AugmentationError("source and target depth ranges (d_max) differ")
    src_ids = {t.tube_id for t in src_ann.tubes}
    missing = [tid for tid in spec.selected_tube_ids if tid not in src_ids]
    if missing:
        raise AugmentationError(f"selected tubes {missing} not present in source")

    if not spec.apply:
        return _copy_clip(tgt_clip), _copy_ann(tgt_ann)

    frames = tgt_clip.frames.copy()
    depth = tgt_clip.depth.copy() if tgt_clip.depth is not None else None
    label = tgt_ann.label_map.astype(np.int64)

    next_tube_id = int(max([t.tube_id for t in tgt_ann.tubes], default=0)) + 1
    next_track_id = int(max([t.track_id for t in tgt_ann.tubes], default=0)) + 1

    pasted_entries = []
    for tid in spec.selected_tube_ids:
        src_tube = src_ann.tube(tid)
        mask = src_ann.label_map == tid
        if not mask.any():
            continue
        frames[mask] = src_clip.frames[mask]
        if depth is not None:
            depth[mask] = src_clip.depth[mask]
        label[mask] = next_tube_id
        pasted_entries.append(
            TubeEntry(
                tube_id=next_tube_id,
                class_id=src_tube.class_id,
                is_thing=src_tube.is_thing,
                track_id=next_track_id,
            )
        )
        next_tube_id += 1
        next_track_id += 1

    # Clip or delete occluded target tubes.
    survivors = []
    for tube in tgt_ann.tubes:
        if (label == tube.tube_id).any():
            survivors.append(tube)

    # A pasted stuff tube replaces an existing stuff tube of the same class:
    # the survivor's remaining pixels join the pasted tube.
    pasted_stuff = {t.class_id: t for t in pasted_entries if not t.is_thing}
    merged = []
    for tube in survivors:
        if not tube.is_thing and tube.class_id in pasted_stuff:
            label[label == tube.tube_id] = pasted_stuff[tube.class_id].tube_id
        else:
            merged.append(tube)

    out_ann = TubeAnnotation(
        label_map=label.astype(np.uint16), tubes=merged + pasted_entries
    )
    out_clip = VideoClip(frames=frames, depth=depth, d_max=tgt_clip.d_max)
    return out_clip, out_ann
