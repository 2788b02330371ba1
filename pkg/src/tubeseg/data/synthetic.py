"""Synthetic moving-shape videos with exact ground truth.

Things are rectangles or ellipses translating at constant velocity over
static stuff bands; every pixel gets a class, a whole-video track id and a
constant per-object depth plane, so metric and stitching expectations are
analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .types import ClassEntry, ClassTable, TubeAnnotation, TubeEntry, VideoClip

_PALETTE = np.array(
    [
        (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
        (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
        (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
        (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
        (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    ],
    dtype=np.uint8,
)


@dataclass
class ObjectSpec:
    """One moving thing: geometry, constant velocity, color, depth plane."""

    shape: str  # "rect" or "ellipse"
    size: tuple  # (height, width) of the bounding box
    start: tuple  # (y, x) top-left corner at frame 0
    velocity: tuple  # (vy, vx) pixels per frame
    color: tuple
    class_id: int
    track_id: int
    depth: float


@dataclass
class StuffSpec:
    """One static background band spanning rows [row_start, row_stop)."""

    row_start: int
    row_stop: int
    color: tuple
    class_id: int
    track_id: int
    depth: float


@dataclass
class SyntheticSequence:
    table: ClassTable
    clips: list  # list of (VideoClip, TubeAnnotation)
    class_map: np.ndarray  # (F,H,W) whole-video class ids
    track_map: np.ndarray  # (F,H,W) whole-video track ids (0 = void)
    depth: np.ndarray | None  # (F,H,W)
    frames: np.ndarray  # (F,H,W,3)
    clip_length: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def _object_mask(spec: ObjectSpec, frame: int, height: int, width: int) -> np.ndarray:
    sy, sx = spec.size
    y = spec.start[0] + spec.velocity[0] * frame
    x = spec.start[1] + spec.velocity[1] * frame
    mask = np.zeros((height, width), dtype=bool)
    if spec.shape == "rect":
        y0, y1 = max(y, 0), min(y + sy, height)
        x0, x1 = max(x, 0), min(x + sx, width)
        if y0 < y1 and x0 < x1:
            mask[y0:y1, x0:x1] = True
    elif spec.shape == "ellipse":
        cy, cx = y + (sy - 1) / 2.0, x + (sx - 1) / 2.0
        ry, rx = sy / 2.0, sx / 2.0
        rows = np.arange(height)[:, None]
        cols = np.arange(width)[None, :]
        mask = ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
    else:
        raise ParameterError(f"unknown shape {spec.shape!r}")
    return mask


def render_sequence(
    things: list[ObjectSpec],
    stuff: list[StuffSpec],
    num_frames: int,
    height: int,
    width: int,
    table: ClassTable,
    d_max: float = 20.0,
    with_depth: bool = True,
    clip_length: int | None = None,
) -> SyntheticSequence:
    """Rasterize specs into frames, labels and clips cut with T-1 overlap."""
    if num_frames < 1:
        raise ParameterError("need at least one frame")
    for spec in things:
        if spec.size[0] > height or spec.size[1] > width:
            raise ParameterError(
                f"object of size {spec.size} larger than {height}x{width} frame"
            )
    frames = np.zeros((num_frames, height, width, 3), dtype=np.uint8)
    track_map = np.zeros((num_frames, height, width), dtype=np.int32)
    class_map = np.zeros((num_frames, height, width), dtype=np.int32)
    depth = np.full((num_frames, height, width), d_max, dtype=np.float64)
    class_of_track = {}

    # Far surfaces first so nearer ones overwrite.
    order = sorted(things, key=lambda s: -s.depth)
    for f in range(num_frames):
        for band in stuff:
            rows = slice(band.row_start, band.row_stop)
            frames[f, rows] = band.color
            track_map[f, rows] = band.track_id
            class_map[f, rows] = band.class_id
            depth[f, rows] = band.depth
            class_of_track[band.track_id] = band.class_id
        for spec in order:
            mask = _object_mask(spec, f, height, width)
            frames[f][mask] = spec.color
            track_map[f][mask] = spec.track_id
            class_map[f][mask] = spec.class_id
            depth[f][mask] = spec.depth
            class_of_track[spec.track_id] = spec.class_id

    thing_ids = {s.track_id for s in things}
    if clip_length is None:
        clip_length = num_frames
    if clip_length > num_frames:
        raise ParameterError("clip length exceeds video length")

    clips = []
    starts = range(num_frames - clip_length + 1) if clip_length < num_frames else [0]
    for s in starts:
        window = slice(s, s + clip_length)
        label = track_map[window].astype(np.uint16)
        present = sorted(int(v) for v in np.unique(label) if v != 0)
        tubes = [
            TubeEntry(
                tube_id=tid,
                class_id=class_of_track[tid],
                is_thing=tid in thing_ids,
                track_id=tid,
            )
            for tid in present
        ]
        clip = VideoClip(
            frames=frames[window].copy(),
            depth=depth[window].copy() if with_depth else None,
            d_max=d_max,
        )
        clips.append((clip, TubeAnnotation(label_map=label.copy(), tubes=tubes)))

    return SyntheticSequence(
        table=table,
        clips=clips,
        class_map=class_map,
        track_map=track_map,
        depth=depth if with_depth else None,
        frames=frames,
        clip_length=clip_length,
    )


def make_class_table(num_things: int, num_stuff: int) -> ClassTable:
    entries = [ClassEntry(i, f"thing{i}", True) for i in range(num_things)]
    entries += [ClassEntry(num_things + j, f"stuff{j}", False) for j in range(num_stuff)]
    return ClassTable(entries)


def generate_synthetic_sequence(
    seed: int,
    num_frames: int,
    height: int,
    width: int,
    num_things: int,
    num_stuff: int = 1,
    clip_length: int | None = None,
    with_depth: bool = True,
    d_max: float = 20.0,
    shapes: tuple = ("rect", "ellipse"),
) -> SyntheticSequence:
    """Seeded random scene; identical seed gives identical bytes."""
    if num_stuff < 1:
        raise ParameterError("need at least one stuff class for the background")
    if num_things < 0:
        raise ParameterError("num_things must be >= 0")
    if height < num_stuff:
        raise ParameterError("more stuff bands than rows")
    rng = np.random.default_rng(seed)
    table = make_class_table(num_things, num_stuff)

    colors = _PALETTE[rng.permutation(len(_PALETTE))]
    while len(colors) < num_things + num_stuff:
        colors = np.concatenate([colors, rng.integers(20, 236, size=(8, 3), dtype=np.uint8)])

    stuff = []
    edges = np.linspace(0, height, num_stuff + 1).astype(int)
    for j in range(num_stuff):
        stuff.append(
            StuffSpec(
                row_start=int(edges[j]),
                row_stop=int(edges[j + 1]),
                color=tuple(int(c) for c in colors[num_things + j]),
                class_id=num_things + j,
                track_id=num_things + 1 + j,
                depth=d_max * (0.85 + 0.1 * j / max(1, num_stuff)),
            )
        )

    things = []
    occupied = np.zeros((height, width), dtype=bool)
    for i in range(num_things):
        sy = int(rng.integers(max(2, height // 6), max(3, height // 3) + 1))
        sx = int(rng.integers(max(2, width // 6), max(3, width // 3) + 1))
        if sy > height or sx > width:
            raise ParameterError(f"object {sy}x{sx} larger than frame")
        placed = False
        for _ in range(64):
            vy = int(rng.integers(-1, 2))
            vx = int(rng.integers(-1, 2))
            y_lo, y_hi = max(0, -vy * (num_frames - 1)), height - sy - max(0, vy * (num_frames - 1))
            x_lo, x_hi = max(0, -vx * (num_frames - 1)), width - sx - max(0, vx * (num_frames - 1))
            if y_hi < y_lo or x_hi < x_lo:
                continue
            y = int(rng.integers(y_lo, y_hi + 1))
            x = int(rng.integers(x_lo, x_hi + 1))
            if occupied[y : y + sy, x : x + sx].any():
                continue
            placed = True
            break
        if not placed:
            raise ParameterError(
                f"could not place object {i} in a {height}x{width} frame over {num_frames} frames"
            )
        occupied[y : y + sy, x : x + sx] = True
        things.append(
            ObjectSpec(
                shape=shapes[int(rng.integers(0, len(shapes)))],
                size=(sy, sx),
                start=(y, x),
                velocity=(vy, vx),
                color=tuple(int(c) for c in colors[i]),
                class_id=i,
                track_id=i + 1,
                depth=d_max * (0.2 + 0.4 * float(rng.random())),
            )
        )

    return render_sequence(
        things, stuff, num_frames, height, width, table,
        d_max=d_max, with_depth=with_depth, clip_length=clip_length,
    )
