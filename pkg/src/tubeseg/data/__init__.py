"""Clip data model, TSEG container I/O and the synthetic video generator."""

from .synthetic import (
    ObjectSpec,
    StuffSpec,
    SyntheticSequence,
    generate_synthetic_sequence,
    make_class_table,
    render_sequence,
)
from .tseg import (
    load_class_table,
    load_clip,
    load_manifest,
    save_class_table,
    save_clip,
    save_manifest,
)
from .types import (
    VOID_ID,
    ClassEntry,
    ClassTable,
    DatasetManifest,
    TubeAnnotation,
    TubeEntry,
    VideoClip,
    validate_annotation,
)

__all__ = [
    "VOID_ID",
    "ClassEntry",
    "ClassTable",
    "DatasetManifest",
    "ObjectSpec",
    "StuffSpec",
    "SyntheticSequence",
    "TubeAnnotation",
    "TubeEntry",
    "VideoClip",
    "generate_synthetic_sequence",
    "load_class_table",
    "load_clip",
    "load_manifest",
    "make_class_table",
    "render_sequence",
    "save_class_table",
    "save_clip",
    "save_manifest",
    "validate_annotation",
]
