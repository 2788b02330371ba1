"""Set-matching loss family with Hungarian assignment and auxiliaries."""

from .aggregate import COMPONENT_NAMES, LossReport, LossWeights, total_loss
from .components import (
    INSTANCE_MAX_PIXELS,
    INSTANCE_TEMPERATURE,
    NEG_CLASS_WEIGHT,
    SILOG_LAMBDA,
    depth_loss,
    instance_discrimination_loss,
    pq_style_loss,
    pq_style_terms,
    temporal_consistency_loss,
    tube_id_cross_entropy,
    video_semantic_loss,
)
from .matching import (
    DICE_EPS,
    Matching,
    dice_coefficient,
    hungarian_match,
    match_clip,
    similarity_matrix,
    vpq_similarity,
)

__all__ = [
    "COMPONENT_NAMES",
    "DICE_EPS",
    "INSTANCE_MAX_PIXELS",
    "INSTANCE_TEMPERATURE",
    "LossReport",
    "LossWeights",
    "Matching",
    "NEG_CLASS_WEIGHT",
    "SILOG_LAMBDA",
    "depth_loss",
    "dice_coefficient",
    "hungarian_match",
    "instance_discrimination_loss",
    "match_clip",
    "pq_style_loss",
    "pq_style_terms",
    "similarity_matrix",
    "temporal_consistency_loss",
    "total_loss",
    "tube_id_cross_entropy",
    "video_semantic_loss",
    "vpq_similarity",
]
