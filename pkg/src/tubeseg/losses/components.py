"""Loss family: set-matching loss, the three auxiliaries, temporal and depth.

Void pixels (label 0) participate in no dense loss. Every component returns a
scalar tensor that is finite and differentiable for valid inputs; the
stop-gradient factors of the matching loss use ``Tensor.detach``.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    Tensor,
    absolute,
    add,
    concat,
    constant,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    normalize_rows,
    reshape,
    slice_axis,
    sub,
    swap_last2,
    tsum,
)
from ..data.types import ClassTable, TubeAnnotation
from ..errors import ContractError, DimensionError
from ..model.network import ClipForward
from .matching import Matching, dice_coefficient

NEG_CLASS_WEIGHT = 0.3  # weight of the unmatched ("none") term
INSTANCE_TEMPERATURE = 0.3
INSTANCE_MAX_PIXELS = 1024
SILOG_LAMBDA = 0.85


def _zero() -> Tensor:
    return constant(0.0)


def pq_frozen_factors(
    forward: ClipForward, ann: TubeAnnotation, matching: Matching
) -> dict:
    """Stop-gradient factor values at the current point, keyed by pair.

    Central finite differences cannot honor a stop-gradient, so the
    verification harness freezes these factors as constants; the resulting
    objective has exactly the gradient the detached loss propagates.
    """
    from .matching import _dice_value

    factors = {}
    for gi, slot in matching.pairs:
        tube = ann.tubes[gi]
        mask = (ann.label_map == tube.tube_id).astype(np.float64)
        factors[(gi, slot)] = (
            _dice_value(mask, forward.m_hat.data[slot]),
            float(forward.p.data[slot, tube.class_id]),
        )
    return factors


def pq_style_terms(
    forward: ClipForward,
    ann: TubeAnnotation,
    matching: Matching,
    frozen_factors: dict | None = None,
) -> tuple:
    """(positive, negative) terms of the set-matching loss.

    Positive, averaged over matched pairs:
    sg(Dice) * (-log p_j(c_i)) + sg(p_j(c_i)) * (1 - Dice(m_i, m_hat_j)),
    which is zero at a perfect prediction (up to the Dice epsilon) and
    propagates exactly the stop-weighted cross-entropy and Dice gradients.
    Negative, averaged over unmatched slots: -log p_j(none).
    """
    n, num_cols = forward.class_logits.shape
    log_p = log_softmax(forward.class_logits, axis=1)  # (N,D+1)

    pos = _zero()
    if matching.pairs:
        terms = []
        for gi, slot in matching.pairs:
            tube = ann.tubes[gi]
            mask = (ann.label_map == tube.tube_id).astype(np.float64)
            m_hat_j = reshape(slice_axis(forward.m_hat, 0, slot, slot + 1), mask.shape)
            dice = dice_coefficient(mask, m_hat_j)
            lp = reshape(
                slice_axis(slice_axis(log_p, 0, slot, slot + 1), 1, tube.class_id, tube.class_id + 1),
                (1,),
            )
            p_c = reshape(
                slice_axis(slice_axis(forward.p, 0, slot, slot + 1), 1, tube.class_id, tube.class_id + 1),
                (1,),
            )
            if frozen_factors is None:
                dice_factor, p_factor = dice.detach(), p_c.detach()
            else:
                frozen_dice, frozen_p = frozen_factors[(gi, slot)]
                dice_factor, p_factor = constant(frozen_dice), constant(frozen_p)
            terms.append(
                add(mul(dice_factor, neg(lp)), mul(p_factor, sub(constant(1.0), dice)))
            )
        total = terms[0]
        for t in terms[1:]:
            total = add(total, t)
        pos = mul(total, constant(1.0 / len(terms)))
        pos = reshape(pos, ())

    negterm = _zero()
    if matching.unmatched_slots:
        indicator = np.zeros(n, dtype=np.float64)
        indicator[matching.unmatched_slots] = 1.0
        log_void = reshape(slice_axis(log_p, 1, num_cols - 1, num_cols), (n,))
        negterm = neg(
            mul(tsum(mul(log_void, constant(indicator))), constant(1.0 / len(matching.unmatched_slots)))
        )
    return pos, negterm


def pq_style_loss(
    forward: ClipForward,
    ann: TubeAnnotation,
    matching: Matching,
    neg_weight: float = NEG_CLASS_WEIGHT,
    frozen_factors: dict | None = None,
) -> Tensor:
    pos, negterm = pq_style_terms(forward, ann, matching, frozen_factors)
    return add(pos, mul(negterm, constant(neg_weight)))


def tube_id_cross_entropy(
    forward: ClipForward, ann: TubeAnnotation, matching: Matching
) -> Tensor:
    """Per-pixel N-way cross entropy against the matched slot index."""
    n = forward.m_hat.shape[0]
    t, h, w = ann.label_map.shape
    slot_of_tube = {ann.tubes[gi].tube_id: slot for gi, slot in matching.pairs}

    target = np.full((t, h, w), -1, dtype=np.int64)
    for tube_id, slot in slot_of_tube.items():
        target[ann.label_map == tube_id] = slot
    labeled = target >= 0
    count = int(labeled.sum())
    if count == 0:
        return _zero()

    onehot = np.zeros((n, t * h * w), dtype=np.float64)
    flat_target = target.reshape(-1)
    cols = np.nonzero(flat_target >= 0)[0]
    onehot[flat_target[cols], cols] = 1.0

    logits = reshape(forward.tube_logits, (n, t * h * w))
    log_m = log_softmax(logits, axis=0)
    return mul(neg(tsum(mul(log_m, constant(onehot)))), constant(1.0 / count))


def video_semantic_loss(
    semantic_logits: Tensor, ann: TubeAnnotation, table: ClassTable
) -> Tensor:
    """Mean per-pixel cross entropy over real classes, void excluded."""
    t, h, w, d = semantic_logits.shape
    target = np.full((t, h, w), -1, dtype=np.int64)
    for tube in ann.tubes:
        target[ann.label_map == tube.tube_id] = tube.class_id
    labeled = target >= 0
    count = int(labeled.sum())
    if count == 0:
        return _zero()

    onehot = np.zeros((t * h * w, d), dtype=np.float64)
    flat = target.reshape(-1)
    rows = np.nonzero(flat >= 0)[0]
    onehot[rows, flat[rows]] = 1.0

    log_p = log_softmax(reshape(semantic_logits, (t * h * w, d)), axis=1)
    return mul(neg(tsum(mul(log_p, constant(onehot)))), constant(1.0 / count))


def instance_discrimination_loss(
    features: Tensor,
    ann: TubeAnnotation,
    temperature: float = INSTANCE_TEMPERATURE,
    max_pixels: int = INSTANCE_MAX_PIXELS,
    seed: int = 0,
) -> Tensor:
    """InfoNCE between pixel embeddings and their tube's mean embedding.

    ``features`` is (THW,C) decoded pixel features. With a single annotated
    tube there are no negatives and the loss is zero by definition.
    """
    flat_labels = ann.label_map.reshape(-1)
    if features.shape[0] != flat_labels.shape[0]:
        raise DimensionError(
            f"features rows {features.shape[0]} != pixels {flat_labels.shape[0]}"
        )
    present = [t.tube_id for t in ann.tubes if (flat_labels == t.tube_id).any()]
    if len(present) < 2:
        return _zero()

    f = normalize_rows(features)  # (THW,C)
    num_pixels = flat_labels.shape[0]

    means = []
    for tube_id in present:
        sel = (flat_labels == tube_id).astype(np.float64)
        weights = sel / sel.sum()
        means.append(matmul(constant(weights[None, :]), f))  # (1,C)
    centers = normalize_rows(concat_rows(means))  # (K,C)

    labeled_idx = np.nonzero(flat_labels > 0)[0]
    rng = np.random.default_rng(seed)
    if labeled_idx.size > max_pixels:
        labeled_idx = np.sort(rng.choice(labeled_idx, size=max_pixels, replace=False))
    s = labeled_idx.size

    pick = np.zeros((s, num_pixels), dtype=np.float64)
    pick[np.arange(s), labeled_idx] = 1.0
    f_sel = matmul(constant(pick), f)  # (S,C)

    logits = mul(matmul(f_sel, swap_last2(centers)), constant(1.0 / temperature))  # (S,K)
    rank = {tube_id: r for r, tube_id in enumerate(present)}
    onehot = np.zeros((s, len(present)), dtype=np.float64)
    for row, pixel in enumerate(labeled_idx):
        onehot[row, rank[int(flat_labels[pixel])]] = 1.0
    log_p = log_softmax(logits, axis=1)
    return mul(neg(tsum(mul(log_p, constant(onehot)))), constant(1.0 / s))


def concat_rows(tensors):
    return concat(tensors, axis=0)


def temporal_consistency_loss(logits_a: Tensor, logits_b: Tensor) -> Tensor:
    """Mean absolute difference between tube logits on overlapping frames."""
    if logits_a.shape != logits_b.shape:
        raise DimensionError(
            f"overlap logits differ in shape: {logits_a.shape} vs {logits_b.shape}"
        )
    if logits_a.ndim < 2 or logits_a.shape[1] == 0:
        raise ContractError("temporal loss needs at least one overlapping frame")
    return mean(absolute(sub(logits_a, logits_b)))


def depth_loss(
    d_hat: Tensor, d_gt: np.ndarray, valid: np.ndarray, silog_lambda: float = SILOG_LAMBDA
) -> Tensor:
    """Scale-invariant log error plus relative squared error over valid pixels."""
    valid = np.asarray(valid, dtype=bool)
    d_gt = np.asarray(d_gt, dtype=np.float64)
    if d_hat.shape != d_gt.shape or d_gt.shape != valid.shape:
        raise DimensionError("depth tensors and mask must share one shape")
    count = int(valid.sum())
    if count == 0:
        return _zero()
    if not (d_gt[valid] > 0).all():
        raise ContractError("ground-truth depth must be positive on valid pixels")

    mask = constant(valid.astype(np.float64))
    inv_count = constant(1.0 / count)
    log_gt = constant(np.where(valid, np.log(np.where(valid, d_gt, 1.0)), 0.0))
    inv_gt = constant(np.where(valid, 1.0 / np.where(valid, d_gt, 1.0), 0.0))

    e = mul(sub(log(d_hat), log_gt), mask)
    mean_sq = mul(tsum(mul(e, e)), inv_count)
    mean_e = mul(tsum(e), inv_count)
    silog = sub(mean_sq, mul(constant(silog_lambda), mul(mean_e, mean_e)))

    ratio = mul(sub(d_hat, constant(d_gt)), inv_gt)
    rse = mul(tsum(mul(ratio, ratio)), inv_count)
    return add(silog, rse)
