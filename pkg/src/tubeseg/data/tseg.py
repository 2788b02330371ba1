"""TSEG container format and the class-table / manifest text files.

Layout (little-endian): magic "TSEG", u32 version=1, u32 T,H,W, u8 flags
(bit0: depth present), f64 d_max, T*H*W*3 u8 RGB, optional T*H*W f64 depth,
u16 T*H*W label map, u32 tube count, then per tube u16 tube_id, u16 class_id,
u8 is_thing, u32 track_id.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, ValidationError
from .types import ClassEntry, ClassTable, DatasetManifest, TubeAnnotation, TubeEntry, VideoClip

MAGIC = b"TSEG"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBd")
_TUBE = struct.Struct("<HHBI")


def save_clip(clip: VideoClip, ann: TubeAnnotation, path) -> None:
    """Write one clip + annotation; refuses to persist invalid annotations."""
    if ann.label_map.shape != clip.frames.shape[:3]:
        raise ValidationError("label map shape must match frames")
    flags = 1 if clip.depth is not None else 0
    blob = bytearray()
    t, h, w = clip.frames.shape[:3]
    blob += _HEADER.pack(MAGIC, VERSION, t, h, w, flags, clip.d_max)
    blob += clip.frames.tobytes()
    if clip.depth is not None:
        blob += clip.depth.astype("<f8").tobytes()
    blob += ann.label_map.astype("<u2").tobytes()
    blob += struct.pack("<I", len(ann.tubes))
    for tube in ann.tubes:
        blob += _TUBE.pack(tube.tube_id, tube.class_id, int(tube.is_thing), tube.track_id)
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_clip(path, table: ClassTable | None = None):
    """Read a clip; validates annotation invariants (and ``table`` if given)."""
    reader = _Reader(Path(path).read_bytes())
    header = reader.take(_HEADER.size)
    magic, version, t, h, w, flags, d_max = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    frames = np.frombuffer(reader.take(t * h * w * 3), dtype=np.uint8).reshape(t, h, w, 3)
    depth = None
    if flags & 1:
        depth = np.frombuffer(reader.take(t * h * w * 8), dtype="<f8").reshape(t, h, w)
    label_map = np.frombuffer(reader.take(t * h * w * 2), dtype="<u2").reshape(t, h, w)
    (count,) = struct.unpack("<I", reader.take(4))
    tubes = []
    for _ in range(count):
        tube_id, class_id, is_thing, track_id = _TUBE.unpack(reader.take(_TUBE.size))
        tubes.append(TubeEntry(tube_id, class_id, bool(is_thing), track_id))
    if reader.pos != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.pos} trailing bytes")

    clip = VideoClip(frames=frames.copy(), depth=depth.copy() if depth is not None else None, d_max=d_max)
    ann = TubeAnnotation(label_map=label_map.copy(), tubes=tubes)
    problems = _structural_violations(ann)
    if table is not None:
        from .types import validate_annotation

        problems += validate_annotation(ann, table)
    if problems:
        raise ValidationError("; ".join(problems))
    return clip, ann


def _structural_violations(ann: TubeAnnotation) -> list[str]:
    seen = set()
    problems = []
    for tube in ann.tubes:
        if tube.tube_id in seen:
            pixels = np.argwhere(ann.label_map == tube.tube_id)
            where = tuple(int(v) for v in pixels[0]) if len(pixels) else None
            problems.append(
                f"duplicate tube id {tube.tube_id}: overlapping tubes"
                + (f", first offending pixel (t,h,w)={where}" if where else "")
            )
        seen.add(tube.tube_id)
    map_ids = set(int(v) for v in np.unique(ann.label_map)) - {0}
    for missing in sorted(map_ids - seen):
        problems.append(f"tube id {missing} in label map but not in tube table")
    return problems


def save_class_table(table: ClassTable, path) -> None:
    lines = [f"{e.class_id}\t{e.name}\t{'thing' if e.is_thing else 'stuff'}" for e in table]
    Path(path).write_text("\n".join(lines) + "\n")


def load_class_table(path) -> ClassTable:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ("thing", "stuff"):
            raise FormatError(f"class table line {lineno} malformed: {line!r}")
        entries.append(ClassEntry(int(parts[0]), parts[1], parts[2] == "thing"))
    return ClassTable(entries)


def save_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"T={manifest.clip_length}", f"classes={manifest.class_table_path}"]
    lines += list(manifest.clip_paths)
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> DatasetManifest:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("T="):
        raise FormatError("manifest must start with a T=<int> header line")
    try:
        clip_length = int(lines[0][2:])
    except ValueError as exc:
        raise FormatError(f"bad clip length in manifest: {lines[0]!r}") from exc
    if len(lines) < 2 or not lines[1].startswith("classes="):
        raise FormatError("manifest needs a classes=<path> line")
    return DatasetManifest(
        clip_paths=lines[2:],
        class_table_path=lines[1][len("classes=") :],
        clip_length=clip_length,
    )
