"""Clip, annotation and class-table data model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

VOID_ID = 0xFFFF  # reserved class sentinel (max representable id)


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    is_thing: bool


class ClassTable:
    """Dense class ids 0..D-1 split into thing and stuff, plus a void sentinel."""

    def __init__(self, entries):
        entries = sorted(entries, key=lambda e: e.class_id)
        ids = [e.class_id for e in entries]
        if ids != list(range(len(entries))):
            raise ValidationError(f"class ids must be dense 0..D-1, got {ids}")
        if VOID_ID in ids:
            raise ValidationError("void id collides with a real class")
        if not entries:
            raise ValidationError("class table needs at least one class")
        self.entries = tuple(entries)
        self._by_id = {e.class_id: e for e in entries}

    @property
    def void_id(self) -> int:
        return VOID_ID

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassTable) and self.entries == other.entries

    def entry(self, class_id: int) -> ClassEntry:
        return self._by_id[class_id]

    def is_thing(self, class_id: int) -> bool:
        return self._by_id[class_id].is_thing

    def thing_ids(self) -> tuple:
        return tuple(e.class_id for e in self.entries if e.is_thing)

    def stuff_ids(self) -> tuple:
        return tuple(e.class_id for e in self.entries if not e.is_thing)


@dataclass
class VideoClip:
    """T RGB frames plus an optional per-pixel depth map in (0, d_max]."""

    frames: np.ndarray  # (T,H,W,3) uint8
    depth: np.ndarray | None = None  # (T,H,W) float64, meters
    d_max: float = 80.0

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.uint8)
        if self.frames.ndim != 4 or self.frames.shape[3] != 3 or self.frames.shape[0] < 1:
            raise ValidationError(f"frames must be (T,H,W,3), got {self.frames.shape}")
        if self.depth is not None:
            self.depth = np.ascontiguousarray(self.depth, dtype=np.float64)
            if self.depth.shape != self.frames.shape[:3]:
                raise ValidationError("depth shape must match frames")
            if not ((self.depth > 0) & (self.depth <= self.d_max)).all():
                raise ValidationError("depth values must lie in (0, d_max]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class TubeEntry:
    tube_id: int
    class_id: int
    is_thing: bool
    track_id: int


@dataclass
class TubeAnnotation:
    """Non-overlapping class-labeled tubes encoded as a dense label map.

    ``label_map`` holds tube ids per pixel, 0 meaning unlabeled/void.
    """

    label_map: np.ndarray  # (T,H,W) uint16
    tubes: list[TubeEntry] = field(default_factory=list)

    def __post_init__(self):
        self.label_map = np.ascontiguousarray(self.label_map, dtype=np.uint16)
        if self.label_map.ndim != 3:
            raise ValidationError(f"label map must be (T,H,W), got {self.label_map.shape}")

    def tube(self, tube_id: int) -> TubeEntry:
        for t in self.tubes:
            if t.tube_id == tube_id:
                return t
        raise KeyError(tube_id)

    def mask(self, tube_id: int) -> np.ndarray:
        return self.label_map == tube_id

    def class_map(self, void_id: int = VOID_ID) -> np.ndarray:
        """Per-pixel class ids, void where unlabeled."""
        out = np.full(self.label_map.shape, void_id, dtype=np.int32)
        for t in self.tubes:
            out[self.label_map == t.tube_id] = t.class_id
        return out

    def track_map(self) -> np.ndarray:
        """Per-pixel whole-video track ids, 0 where unlabeled."""
        out = np.zeros(self.label_map.shape, dtype=np.int32)
        for t in self.tubes:
            out[self.label_map == t.tube_id] = t.track_id
        return out


def validate_annotation(ann: TubeAnnotation, table: ClassTable) -> list[str]:
    """All invariant violations of ``ann`` against ``table`` (empty when valid)."""
    violations = []
    seen_ids = {}
    for entry in ann.tubes:
        if entry.tube_id == 0:
            violations.append("tube id 0 is reserved for void")
        if entry.tube_id in seen_ids:
            pixels = np.argwhere(ann.label_map == entry.tube_id)
            where = tuple(int(v) for v in pixels[0]) if len(pixels) else None
            violations.append(
                f"duplicate tube id {entry.tube_id}: overlapping tubes"
                + (f", first offending pixel (t,h,w)={where}" if where else "")
            )
        seen_ids[entry.tube_id] = entry
        if entry.class_id not in [e.class_id for e in table]:
            violations.append(f"tube {entry.tube_id} has unknown class {entry.class_id}")
        elif table.is_thing(entry.class_id) != entry.is_thing:
            violations.append(
                f"tube {entry.tube_id} thing/stuff flag disagrees with class table"
            )
    map_ids = set(int(v) for v in np.unique(ann.label_map)) - {0}
    for tube_id in sorted(map_ids - set(seen_ids)):
        violations.append(f"tube id {tube_id} present in label map but absent from table")
    stuff_classes = {}
    for entry in ann.tubes:
        if not entry.is_thing:
            if entry.class_id in stuff_classes:
                violations.append(
                    f"duplicate stuff tube for class {entry.class_id} "
                    f"(tubes {stuff_classes[entry.class_id]} and {entry.tube_id})"
                )
            else:
                stuff_classes[entry.class_id] = entry.tube_id
    return violations


@dataclass
class DatasetManifest:
    """Ordered clip files of one video, cut with a fixed frame overlap."""

    clip_paths: list[str]
    class_table_path: str
    clip_length: int

    def __post_init__(self):
        if self.clip_length < 1:
            raise ValidationError("clip length must be >= 1")
        if not self.clip_paths:
            raise ValidationError("manifest lists no clips")
