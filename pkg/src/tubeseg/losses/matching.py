"""Tube matching: soft Dice, the class-weighted similarity, and assignment.

Thing tubes are matched to thing slots by maximizing total similarity with
the classic assignment algorithm (on the negated matrix); stuff tubes are
never matched, their pairs come from the fixed slot binding. Ties are broken
toward the lexicographically smallest (gt, slot) pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..autodiff import Tensor, add, constant, div, mul, tsum
from ..data.types import ClassTable, TubeAnnotation
from ..errors import CapacityError, ContractError, DimensionError
from ..model.config import MemoryLayout
from ..model.network import ClipForward

DICE_EPS = 1e-8
_TIE_TOL = 1e-9


@dataclass
class Matching:
    """Pairs of (gt tube index, prediction slot) plus the leftover slots."""

    pairs: list = field(default_factory=list)
    unmatched_slots: list = field(default_factory=list)


def dice_coefficient(gt_mask, m_hat_j: Tensor) -> Tensor:
    """Soft Dice over the whole tube volume, in [0, 1]."""
    mask = np.asarray(gt_mask, dtype=np.float64)
    if mask.shape != m_hat_j.shape:
        raise DimensionError(f"dice shapes differ: {mask.shape} vs {m_hat_j.shape}")
    m = constant(mask)
    inter = tsum(mul(m, m_hat_j))
    denom = add(add(constant(mask.sum()), tsum(m_hat_j)), constant(DICE_EPS))
    return div(mul(constant(2.0), inter), denom)


def vpq_similarity(gt_mask, gt_class: int, m_hat_j: Tensor, p_j: Tensor) -> Tensor:
    """Class probability times Dice; the matching and optimization signal."""
    from ..autodiff import reshape, slice_axis

    p_c = reshape(slice_axis(p_j, 0, gt_class, gt_class + 1), (1,))
    return mul(p_c, dice_coefficient(gt_mask, m_hat_j))


def _dice_value(mask: np.ndarray, soft: np.ndarray) -> float:
    inter = float((mask * soft).sum())
    return 2.0 * inter / (float(mask.sum()) + float(soft.sum()) + DICE_EPS)


def similarity_matrix(
    forward: ClipForward, ann: TubeAnnotation, table: ClassTable, layout: MemoryLayout
) -> tuple:
    """(K_thing x N_thing similarity matrix, thing gt indices) as plain numpy."""
    thing_indices = [i for i, t in enumerate(ann.tubes) if t.is_thing]
    n_thing = len(layout.thing_slots)
    sim = np.zeros((len(thing_indices), n_thing), dtype=np.float64)
    m_hat = forward.m_hat.data
    p = forward.p.data
    for row, gi in enumerate(thing_indices):
        tube = ann.tubes[gi]
        mask = (ann.label_map == tube.tube_id).astype(np.float64)
        for slot in layout.thing_slots:
            sim[row, slot] = p[slot, tube.class_id] * _dice_value(mask, m_hat[slot])
    return sim, thing_indices


def hungarian_match(sim: np.ndarray) -> list:
    """Assignment maximizing total similarity, deterministic under ties.

    Rows are gt things, columns prediction slots; requires K <= N. Among all
    maximizing assignments the one with the lexicographically smallest slot
    sequence is returned (row 0 gets the smallest feasible slot, then row 1,
    and so on).
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2:
        raise DimensionError(f"similarity matrix must be 2D, got {sim.shape}")
    k, n = sim.shape
    if k == 0:
        return []
    if k > n:
        raise CapacityError(f"{k} ground-truth things but only {n} thing slots")
    if not np.isfinite(sim).all():
        raise ContractError("similarity entries must be finite")

    rows, cols = linear_sum_assignment(-sim)
    best_total = float(sim[rows, cols].sum())

    pairs = []
    used = set()
    fixed = 0.0
    for i in range(k):
        rest = list(range(i + 1, k))
        for j in range(n):
            if j in used:
                continue
            candidate = fixed + float(sim[i, j])
            if rest:
                free = [c for c in range(n) if c not in used and c != j]
                sub = sim[np.ix_(rest, free)]
                rr, cc = linear_sum_assignment(-sub)
                candidate += float(sub[rr, cc].sum())
            if candidate >= best_total - _TIE_TOL:
                pairs.append((i, j))
                used.add(j)
                fixed += float(sim[i, j])
                break
    return pairs


def match_clip(
    forward: ClipForward, ann: TubeAnnotation, table: ClassTable, layout: MemoryLayout
) -> Matching:
    """Hungarian over things, fixed binding for stuff, rest unmatched."""
    sim, thing_indices = similarity_matrix(forward, ann, table, layout)
    pairs = [(thing_indices[row], slot) for row, slot in hungarian_match(sim)]
    for gi, tube in enumerate(ann.tubes):
        if not tube.is_thing:
            pairs.append((gi, layout.slot_for_stuff_class(tube.class_id, table)))
    matched_slots = {slot for _, slot in pairs}
    unmatched = [s for s in range(layout.memory_size) if s not in matched_slots]
    return Matching(pairs=sorted(pairs), unmatched_slots=unmatched)
