"""Video evaluation: STQ (SQ, AQ), windowed VPQ, and depth-aware DSTQ.

All metrics compare a predicted :class:`VideoResult` against a ground-truth
one; pixels that are void in the ground truth are ignored everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data.types import VOID_ID, ClassTable
from .errors import ParameterError, TubesegError
from .inference import VideoResult

DEPTH_INLIER_THRESHOLD = 1.25
DEFAULT_VPQ_WINDOWS = (1, 2, 3, 4)


class UndefinedMetricError(TubesegError):
    """The metric has no value on this input (e.g. AQ without gt tracks)."""


@dataclass
class MetricReport:
    sq: float
    aq: float
    stq: float
    vpq: float | None = None
    vpq_per_window: dict | None = None
    dq: float | None = None
    dstq: float | None = None

    def as_lines(self) -> list:
        lines = [f"sq\t{self.sq:.6f}", f"aq\t{self.aq:.6f}", f"stq\t{self.stq:.6f}"]
        if self.vpq is not None:
            for k in sorted(self.vpq_per_window):
                lines.append(f"vpq@{k}\t{self.vpq_per_window[k]:.6f}")
            lines.append(f"vpq\t{self.vpq:.6f}")
        if self.dq is not None:
            lines.append(f"dq\t{self.dq:.6f}")
            lines.append(f"dstq\t{self.dstq:.6f}")
        return lines


def stq_from_components(sq: float, aq: float) -> float:
    return math.sqrt(sq * aq)


def dstq_from_components(sq: float, aq: float, dq: float) -> float:
    return (sq * aq * dq) ** (1.0 / 3.0)


def _check_extents(pred: VideoResult, gt: VideoResult) -> None:
    if pred.class_map.shape != gt.class_map.shape:
        raise ParameterError(
            f"prediction {pred.class_map.shape} and truth {gt.class_map.shape} differ"
        )


def compute_stq(pred: VideoResult, gt: VideoResult, table: ClassTable) -> tuple:
    """(SQ, AQ, STQ); raises UndefinedMetricError when no gt track exists."""
    _check_extents(pred, gt)
    valid = gt.class_map != VOID_ID

    # SQ: mean class IoU of the semantic maps, classes absent from both skipped.
    ious = []
    for entry in table:
        c = entry.class_id
        gt_c = (gt.class_map == c) & valid
        pred_c = (pred.class_map == c) & valid
        union = int(np.logical_or(gt_c, pred_c).sum())
        if union == 0:
            continue
        inter = int(np.logical_and(gt_c, pred_c).sum())
        ious.append(inter / union)
    sq = float(np.mean(ious)) if ious else 0.0

    # AQ: association quality over ground-truth thing tracks.
    gt_tracks = [
        tid for tid, cid in gt.tracks.items() if table.is_thing(cid)
    ]
    gt_tracks = [tid for tid in gt_tracks if ((gt.id_map == tid) & valid).any()]
    if not gt_tracks:
        raise UndefinedMetricError("AQ undefined: ground truth has no tracks")

    pred_ids = [int(v) for v in np.unique(pred.id_map[valid]) if v != 0]
    aq_terms = []
    for tid in gt_tracks:
        g = (gt.id_map == tid) & valid
        g_size = int(g.sum())
        acc = 0.0
        for pid in pred_ids:
            p = (pred.id_map == pid) & valid
            inter = int(np.logical_and(p, g).sum())
            if inter == 0:
                continue
            union = int(np.logical_or(p, g).sum())
            acc += inter * (inter / union)
        aq_terms.append(acc / g_size)
    aq = float(np.mean(aq_terms))
    return sq, aq, stq_from_components(sq, aq)


def _span_segments(id_map, class_map, tracks, valid, start, stop):
    """Segments (track id -> (class, mask)) of one temporal span."""
    window_ids = id_map[start:stop]
    window_valid = valid[start:stop]
    segments = {}
    for tid in (int(v) for v in np.unique(window_ids) if v != 0):
        mask = (window_ids == tid) & window_valid
        if mask.any():
            segments[tid] = (tracks[tid], mask)
    return segments


def compute_vpq(
    pred: VideoResult, gt: VideoResult, windows=DEFAULT_VPQ_WINDOWS
) -> tuple:
    """(mean VPQ, {window: PQ}) with sliding spans of each window size.

    Within one span, tubes concatenated over the span are matched greedily by
    descending IoU among same-class pairs with IoU > 0.5 (such matches are
    unique); TP IoUs, FP and FN counts aggregate over all spans of a window.
    """
    _check_extents(pred, gt)
    num_frames = gt.num_frames
    valid = gt.class_map != VOID_ID
    per_window = {}
    for k in windows:
        if not 1 <= k <= num_frames:
            raise ParameterError(f"window {k} outside 1..{num_frames}")
        iou_sum, tp, fp, fn = 0.0, 0, 0, 0
        for start in range(num_frames - k + 1):
            gt_segments = _span_segments(gt.id_map, gt.class_map, gt.tracks, valid, start, start + k)
            pred_segments = _span_segments(
                pred.id_map, pred.class_map, pred.tracks, valid, start, start + k
            )
            pairs = []
            for gid, (gclass, gmask) in gt_segments.items():
                for pid, (pclass, pmask) in pred_segments.items():
                    if gclass != pclass:
                        continue
                    inter = int(np.logical_and(gmask, pmask).sum())
                    if inter == 0:
                        continue
                    union = int(np.logical_or(gmask, pmask).sum())
                    iou = inter / union
                    if iou > 0.5:
                        pairs.append((iou, gid, pid))
            pairs.sort(key=lambda item: (-item[0], item[1], item[2]))
            matched_gt, matched_pred = set(), set()
            for iou, gid, pid in pairs:
                if gid in matched_gt or pid in matched_pred:
                    continue
                matched_gt.add(gid)
                matched_pred.add(pid)
                iou_sum += iou
                tp += 1
            fp += len(pred_segments) - len(matched_pred)
            fn += len(gt_segments) - len(matched_gt)
        denom = tp + 0.5 * fp + 0.5 * fn
        per_window[k] = iou_sum / denom if denom > 0 else 1.0
    mean_vpq = float(np.mean([per_window[k] for k in windows]))
    return mean_vpq, per_window


def compute_dq(
    pred_depth: np.ndarray,
    gt_depth: np.ndarray,
    threshold: float = DEPTH_INLIER_THRESHOLD,
    valid: np.ndarray | None = None,
) -> float:
    """Fraction of valid pixels whose depth ratio stays under the threshold."""
    if threshold <= 1.0:
        raise ParameterError(f"inlier threshold must exceed 1, got {threshold}")
    pred_depth = np.asarray(pred_depth, dtype=np.float64)
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    if pred_depth.shape != gt_depth.shape:
        raise ParameterError("depth maps differ in shape")
    mask = np.isfinite(gt_depth) & (gt_depth > 0)
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    if not mask.any():
        raise UndefinedMetricError("DQ undefined: no valid depth pixels")
    ratio = np.maximum(pred_depth[mask] / gt_depth[mask], gt_depth[mask] / pred_depth[mask])
    return float((ratio < threshold).mean())


def evaluate(
    pred: VideoResult,
    gt: VideoResult,
    table: ClassTable,
    windows=DEFAULT_VPQ_WINDOWS,
    depth_threshold: float = DEPTH_INLIER_THRESHOLD,
) -> MetricReport:
    """Full report; DQ/DSTQ appear only when both results carry depth."""
    sq, aq, stq = compute_stq(pred, gt, table)
    windows = tuple(k for k in windows if k <= gt.num_frames)
    vpq, per_window = compute_vpq(pred, gt, windows)
    report = MetricReport(sq=sq, aq=aq, stq=stq, vpq=vpq, vpq_per_window=per_window)
    if pred.depth is not None and gt.depth is not None:
        report.dq = compute_dq(pred.depth, gt.depth, depth_threshold)
        report.dstq = dstq_from_components(sq, aq, report.dq)
    return report
