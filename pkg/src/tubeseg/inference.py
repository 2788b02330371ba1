"""Clip-level tube-ID assignment and whole-video stitching.

Per-pixel mode: argmax the class per slot, void slots whose best real-class
probability falls below the confidence threshold (or whose argmax is the
"none" column), then argmax the surviving soft tubes per pixel. Per-mask mode
emits overlapping per-slot proposals instead. Clip results are stitched into
a video by greedy IoU matching on the shared frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.types import VOID_ID, ClassTable, TubeAnnotation, TubeEntry, VideoClip
from .data.tseg import load_clip, save_clip
from .errors import FormatError, StitchError
from .model.config import MemoryLayout
from .model.network import ClipForward

CONFIDENCE_THRESHOLD = 0.7
MASK_THRESHOLD = 0.4
STITCH_IOU = 0.5


@dataclass
class Proposal:
    slot: int
    class_id: int
    score: float
    mask: np.ndarray  # (T,H,W) bool


@dataclass
class ClipResult:
    class_map: np.ndarray  # (T,H,W) int32, VOID_ID where void
    id_map: np.ndarray  # (T,H,W) int32 clip-local tube ids, 0 = void
    tubes: dict  # local id -> class_id
    proposals: list = field(default_factory=list)
    depth: np.ndarray | None = None

    @property
    def num_frames(self) -> int:
        return self.class_map.shape[0]


@dataclass
class VideoResult:
    class_map: np.ndarray  # (F,H,W) int32
    id_map: np.ndarray  # (F,H,W) int32 whole-video track ids, 0 = void
    tracks: dict  # track id -> class_id
    depth: np.ndarray | None = None

    @property
    def num_frames(self) -> int:
        return self.class_map.shape[0]


def assign_per_pixel(
    forward: ClipForward,
    table: ClassTable,
    layout: MemoryLayout,
    threshold: float = CONFIDENCE_THRESHOLD,
) -> ClipResult:
    """Argmax twice: class per slot, then slot per pixel among survivors."""
    p = forward.p.data
    n, cols = p.shape
    d = cols - 1
    t, h, w = forward.shape

    real_best = p[:, :d].max(axis=1)
    argmax_all = p.argmax(axis=1)
    surviving = (real_best >= threshold) & (argmax_all != d)

    slot_class = p[:, :d].argmax(axis=1).astype(np.int64)
    for slot in layout.stuff_slots:
        slot_class[slot] = layout.stuff_class_for_slot(slot, table)

    class_map = np.full((t, h, w), VOID_ID, dtype=np.int32)
    id_map = np.zeros((t, h, w), dtype=np.int32)
    tubes = {}
    alive = np.nonzero(surviving)[0]
    if alive.size:
        m = forward.m_hat.data[alive]  # (A,T,H,W)
        winner = alive[np.argmax(m, axis=0)]  # (T,H,W) global slot index
        id_map = (winner + 1).astype(np.int32)
        class_map = slot_class[winner].astype(np.int32)
        for slot in alive:
            if (winner == slot).any():
                tubes[int(slot) + 1] = int(slot_class[slot])

    depth = forward.depth.data.copy() if forward.depth is not None else None
    return ClipResult(class_map=class_map, id_map=id_map, tubes=tubes, depth=depth)


def assign_per_mask(
    forward: ClipForward,
    table: ClassTable,
    layout: MemoryLayout,
    mask_threshold: float = MASK_THRESHOLD,
) -> ClipResult:
    """Overlapping per-slot mask proposals with confidence-weighted scores."""
    p = forward.p.data
    d = p.shape[1] - 1
    m_hat = forward.m_hat.data
    proposals = []
    for slot in layout.thing_slots:
        mask = m_hat[slot] >= mask_threshold
        if not mask.any():
            continue
        class_id = int(p[slot, :d].argmax())
        score = float(p[slot, :d].max() * m_hat[slot][mask].mean())
        proposals.append(Proposal(slot=slot, class_id=class_id, score=score, mask=mask))

    t, h, w = forward.shape
    return ClipResult(
        class_map=np.full((t, h, w), VOID_ID, dtype=np.int32),
        id_map=np.zeros((t, h, w), dtype=np.int32),
        tubes={},
        proposals=proposals,
        depth=forward.depth.data.copy() if forward.depth is not None else None,
    )


def clip_result_from_annotation(ann: TubeAnnotation, clip: VideoClip | None = None) -> ClipResult:
    """Ground-truth-as-prediction (oracle bypass) for identity tests."""
    return ClipResult(
        class_map=ann.class_map(),
        id_map=ann.label_map.astype(np.int32),
        tubes={t.tube_id: t.class_id for t in ann.tubes},
        depth=clip.depth.copy() if clip is not None and clip.depth is not None else None,
    )


def stitch_clips(results: list) -> VideoResult:
    """Fold ordered clip results (stride one frame) into one video result.

    The first clip seeds the track table; each later clip matches its tubes
    to the existing tracks by IoU over the T-1 shared frames, greedily in
    descending IoU (ties: lower track id, then lower local id), accepting
    IoU >= 0.5. Matched tubes inherit track ids, unmatched tubes open fresh
    tracks, and each clip contributes its newest frame to the video.
    """
    if not results:
        raise StitchError("no clip results to stitch")
    t, h, w = results[0].class_map.shape
    for r in results[1:]:
        if r.class_map.shape != (t, h, w):
            raise StitchError("clip results disagree in shape")
    if len(results) > 1 and t < 2:
        raise StitchError("stitching needs clip length >= 2 for a frame overlap")

    num_frames = t + len(results) - 1
    id_map = np.zeros((num_frames, h, w), dtype=np.int32)
    class_map = np.full((num_frames, h, w), VOID_ID, dtype=np.int32)
    with_depth = all(r.depth is not None for r in results)
    depth = np.zeros((num_frames, h, w), dtype=np.float64) if with_depth else None
    tracks = {}
    next_track = 1

    def render(frame_index, result, clip_frame, local_to_track):
        for lid, tid in local_to_track.items():
            mask = result.id_map[clip_frame] == lid
            id_map[frame_index][mask] = tid
            class_map[frame_index][mask] = tracks[tid]
        if depth is not None:
            depth[frame_index] = result.depth[clip_frame]

    first = results[0]
    mapping = {}
    for lid in sorted(first.tubes):
        if (first.id_map == lid).any():
            mapping[lid] = next_track
            tracks[next_track] = first.tubes[lid]
            next_track += 1
    for f in range(t):
        render(f, first, f, mapping)

    for c, result in enumerate(results[1:], start=1):
        overlap_prev = id_map[c : c + t - 1]  # already-rendered shared frames
        overlap_new = result.id_map[: t - 1]
        pairs = []
        prev_ids = [int(v) for v in np.unique(overlap_prev) if v != 0]
        local_ids = [int(v) for v in np.unique(overlap_new) if v != 0]
        for lid in local_ids:
            lmask = overlap_new == lid
            for tid in prev_ids:
                pmask = overlap_prev == tid
                inter = int(np.logical_and(lmask, pmask).sum())
                if inter == 0:
                    continue
                union = int(np.logical_or(lmask, pmask).sum())
                pairs.append((inter / union, tid, lid))
        pairs.sort(key=lambda item: (-item[0], item[1], item[2]))

        mapping = {}
        used_tracks = set()
        for iou, tid, lid in pairs:
            if iou < STITCH_IOU:
                break
            if lid in mapping or tid in used_tracks:
                continue
            mapping[lid] = tid
            used_tracks.add(tid)
        for lid in sorted(result.tubes):
            if lid in mapping:
                continue
            if not (result.id_map == lid).any():
                continue
            mapping[lid] = next_track
            tracks[next_track] = result.tubes[lid]
            next_track += 1
        render(c + t - 1, result, t - 1, mapping)

    return VideoResult(class_map=class_map, id_map=id_map, tracks=tracks, depth=depth)


def video_truth_from_clips(pairs: list, d_max: float | None = None) -> VideoResult:
    """Assemble the whole-video ground truth from overlapping annotated clips."""
    if not pairs:
        raise StitchError("no clips")
    t = pairs[0][1].label_map.shape[0]
    h, w = pairs[0][1].label_map.shape[1:]
    num_frames = t + len(pairs) - 1
    id_map = np.zeros((num_frames, h, w), dtype=np.int32)
    class_map = np.full((num_frames, h, w), VOID_ID, dtype=np.int32)
    with_depth = all(clip.depth is not None for clip, _ in pairs)
    depth = np.zeros((num_frames, h, w), dtype=np.float64) if with_depth else None
    tracks = {}
    for c, (clip, ann) in enumerate(pairs):
        track = ann.track_map()
        classes = ann.class_map()
        for f in range(t):
            id_map[c + f] = track[f]
            class_map[c + f] = classes[f]
            if depth is not None:
                depth[c + f] = clip.depth[f]
        for tube in ann.tubes:
            tracks[tube.track_id] = tube.class_id
    return VideoResult(class_map=class_map, id_map=id_map, tracks=tracks, depth=depth)


# ---------------------------------------------------------------------------
# dumps: clip/video results reuse the TSEG container, proposals get records
# ---------------------------------------------------------------------------


def save_video_result(
    result: VideoResult, path, table: ClassTable | None = None, d_max: float = 80.0
) -> None:
    frames = np.zeros(result.class_map.shape + (3,), dtype=np.uint8)
    if result.id_map.max(initial=0) > 0xFFFE:
        raise FormatError("track ids exceed the u16 label map range")
    tubes = [
        TubeEntry(
            tube_id=tid,
            class_id=cid,
            is_thing=table.is_thing(cid) if table is not None else True,
            track_id=tid,
        )
        for tid, cid in sorted(result.tracks.items())
    ]
    if result.depth is not None:
        d_max = max(d_max, float(result.depth.max()))
    clip = VideoClip(frames=frames, depth=result.depth, d_max=d_max)
    ann = TubeAnnotation(label_map=result.id_map.astype(np.uint16), tubes=tubes)
    save_clip(clip, ann, path)


def load_video_result(path, table: ClassTable) -> VideoResult:
    clip, ann = load_clip(path)
    tracks = {t.tube_id: t.class_id for t in ann.tubes}
    class_map = np.full(ann.label_map.shape, VOID_ID, dtype=np.int32)
    for tube in ann.tubes:
        class_map[ann.label_map == tube.tube_id] = tube.class_id
    return VideoResult(
        class_map=class_map,
        id_map=ann.label_map.astype(np.int32),
        tracks=tracks,
        depth=clip.depth,
    )


def save_clip_result(result: ClipResult, table: ClassTable, path, d_max: float = 80.0) -> None:
    frames = np.zeros(result.class_map.shape + (3,), dtype=np.uint8)
    tubes = [
        TubeEntry(tube_id=lid, class_id=cid, is_thing=table.is_thing(cid), track_id=lid)
        for lid, cid in sorted(result.tubes.items())
    ]
    if result.depth is not None:
        d_max = max(d_max, float(result.depth.max()))
    clip = VideoClip(frames=frames, depth=result.depth, d_max=d_max)
    ann = TubeAnnotation(label_map=result.id_map.astype(np.uint16), tubes=tubes)
    save_clip(clip, ann, path)


def load_clip_result(path) -> ClipResult:
    clip, ann = load_clip(path)
    return ClipResult(
        class_map=ann.class_map(),
        id_map=ann.label_map.astype(np.int32),
        tubes={t.tube_id: t.class_id for t in ann.tubes},
        depth=clip.depth,
    )


_PROPOSAL_MAGIC = b"TPRP"


def save_proposals(proposals: list, shape: tuple, path) -> None:
    t, h, w = shape
    blob = bytearray()
    blob += _PROPOSAL_MAGIC
    blob += struct.pack("<IIII", len(proposals), t, h, w)
    for prop in proposals:
        blob += struct.pack("<IId", prop.slot, prop.class_id, prop.score)
        blob += prop.mask.astype(np.uint8).tobytes()
    Path(path).write_bytes(bytes(blob))


def load_proposals(path) -> list:
    data = Path(path).read_bytes()
    if data[:4] != _PROPOSAL_MAGIC:
        raise FormatError("bad proposal dump magic")
    count, t, h, w = struct.unpack("<IIII", data[4:20])
    pos = 20
    out = []
    for _ in range(count):
        slot, class_id, score = struct.unpack("<IId", data[pos : pos + 16])
        pos += 16
        mask = np.frombuffer(data[pos : pos + t * h * w], dtype=np.uint8)
        if mask.size != t * h * w:
            raise FormatError("truncated proposal dump")
        pos += t * h * w
        out.append(Proposal(slot=slot, class_id=class_id, score=score, mask=mask.reshape(t, h, w).astype(bool)))
    return out
