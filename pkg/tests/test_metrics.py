"""Metric evaluators against direct-formula and brute-force oracles."""

import math

import numpy as np
import pytest

from tubeseg.data import VOID_ID, make_class_table
from tubeseg.data.synthetic import ObjectSpec, StuffSpec, render_sequence
from tubeseg.errors import ParameterError
from tubeseg.inference import VideoResult, clip_result_from_annotation, stitch_clips, video_truth_from_clips
from tubeseg.metrics import (
    UndefinedMetricError,
    compute_dq,
    compute_stq,
    compute_vpq,
    dstq_from_components,
    evaluate,
    stq_from_components,
)


def _truth(num_frames=4, velocity=(0, 1)):
    table = make_class_table(1, 1)
    thing = ObjectSpec("rect", (3, 3), (2, 1), velocity, (200, 30, 30), 0, 1, 5.0)
    band = StuffSpec(0, 10, (20, 90, 160), 1, 2, 18.0)
    seq = render_sequence([thing], [band], num_frames, 10, 10, table, clip_length=2)
    return seq, video_truth_from_clips(seq.clips)


def aq_direct_formula(pred: VideoResult, gt: VideoResult, thing_tracks) -> float:
    """Independent evaluation of the association-quality definition."""
    valid = gt.class_map != VOID_ID
    terms = []
    for tid in thing_tracks:
        g = (gt.id_map == tid) & valid
        total = 0.0
        for pid in np.unique(pred.id_map[valid]):
            if pid == 0:
                continue
            p = (pred.id_map == pid) & valid
            tpa = float(np.logical_and(p, g).sum())
            if tpa == 0:
                continue
            union = float(np.logical_or(p, g).sum())
            total += tpa * (tpa / union)
        terms.append(total / float(g.sum()))
    return float(np.mean(terms))


def brute_force_image_pq(pred: VideoResult, gt: VideoResult, frame: int) -> float:
    """Plain single-image panoptic quality on one frame."""
    valid = gt.class_map[frame] != VOID_ID
    gt_segments = {}
    for tid in np.unique(gt.id_map[frame]):
        if tid == 0:
            continue
        mask = (gt.id_map[frame] == tid) & valid
        if mask.any():
            gt_segments[tid] = (gt.tracks[tid], mask)
    pred_segments = {}
    for pid in np.unique(pred.id_map[frame]):
        if pid == 0:
            continue
        mask = (pred.id_map[frame] == pid) & valid
        if mask.any():
            pred_segments[pid] = (pred.tracks[pid], mask)
    tp, iou_sum = 0, 0.0
    used = set()
    for gid, (gcls, gmask) in gt_segments.items():
        for pid, (pcls, pmask) in pred_segments.items():
            if pid in used or pcls != gcls:
                continue
            inter = np.logical_and(gmask, pmask).sum()
            union = np.logical_or(gmask, pmask).sum()
            if union and inter / union > 0.5:
                tp += 1
                iou_sum += inter / union
                used.add(pid)
                break
    fp = len(pred_segments) - len(used)
    fn = len(gt_segments) - tp
    return iou_sum / (tp + 0.5 * fp + 0.5 * fn)


class TestStq:
    def test_reported_composition_identity(self):
        assert stq_from_components(0.768, 0.638) == pytest.approx(0.700, abs=0.001)

    def test_perfect_prediction(self):
        seq, truth = _truth()
        sq, aq, stq = compute_stq(truth, truth, seq.table)
        assert (sq, aq, stq) == (1.0, 1.0, 1.0)

    def test_id_switch_matches_direct_formula(self):
        seq, truth = _truth(num_frames=4)
        pred = VideoResult(
            class_map=truth.class_map.copy(),
            id_map=truth.id_map.copy(),
            tracks=dict(truth.tracks),
        )
        # Break the thing track at frame 2: frames 2..3 carry a new id.
        new_id = max(pred.tracks) + 1
        switched = pred.id_map[2:] == 1
        pred.id_map[2:][switched] = new_id
        pred.tracks[new_id] = pred.tracks[1]

        sq, aq, stq = compute_stq(pred, truth, seq.table)
        expected_aq = aq_direct_formula(pred, truth, [1])
        assert aq == pytest.approx(expected_aq, abs=1e-9)
        assert aq < 1.0
        assert sq == pytest.approx(1.0, abs=1e-12)
        assert stq == pytest.approx(math.sqrt(sq * aq), abs=1e-15)

    def test_no_tracks_is_error_status(self):
        table = make_class_table(0, 2)
        band1 = StuffSpec(0, 5, (1, 2, 3), 0, 1, 18.0)
        band2 = StuffSpec(5, 10, (4, 5, 6), 1, 2, 18.0)
        seq = render_sequence([], [band1, band2], 3, 10, 10, table, clip_length=3)
        truth = video_truth_from_clips(seq.clips)
        with pytest.raises(UndefinedMetricError):
            compute_stq(truth, truth, table)

    def test_aq_invariant_to_predicted_label_permutation(self):
        seq, truth = _truth()
        relabeled = VideoResult(
            class_map=truth.class_map.copy(),
            id_map=np.where(truth.id_map == 1, 7, np.where(truth.id_map == 2, 9, 0)),
            tracks={7: truth.tracks[1], 9: truth.tracks[2]},
        )
        _, aq_a, _ = compute_stq(truth, truth, seq.table)
        _, aq_b, _ = compute_stq(relabeled, truth, seq.table)
        assert aq_a == pytest.approx(aq_b, abs=1e-12)

    def test_geometric_mean_identity_holds(self):
        seq, truth = _truth()
        pred = VideoResult(
            class_map=truth.class_map.copy(),
            id_map=truth.id_map.copy(),
            tracks=dict(truth.tracks),
        )
        pred.class_map[0, :2, :2] = VOID_ID  # damage something
        sq, aq, stq = compute_stq(pred, truth, seq.table)
        assert stq == math.sqrt(sq * aq)
        assert 0.0 <= stq <= 1.0


class TestVpq:
    def test_perfect_prediction_all_windows(self):
        seq, truth = _truth(num_frames=5)
        vpq, per_window = compute_vpq(truth, truth, windows=(1, 2, 3, 4))
        assert vpq == 1.0
        assert all(v == 1.0 for v in per_window.values())

    def test_empty_prediction_zero(self):
        seq, truth = _truth()
        empty = VideoResult(
            class_map=np.full_like(truth.class_map, VOID_ID),
            id_map=np.zeros_like(truth.id_map),
            tracks={},
        )
        vpq, per_window = compute_vpq(empty, truth, windows=(1, 2))
        assert vpq == 0.0

    def test_window_one_equals_image_pq(self):
        table = make_class_table(2, 1)
        a = ObjectSpec("rect", (2, 2), (1, 1), (0, 0), (200, 0, 0), 0, 1, 4.0)
        b = ObjectSpec("rect", (2, 2), (3, 3), (0, 0), (0, 200, 0), 1, 2, 5.0)
        band = StuffSpec(0, 6, (20, 90, 160), 2, 3, 18.0)
        seq = render_sequence([a, b], [band], 1, 6, 6, table, clip_length=1)
        truth = video_truth_from_clips(seq.clips)
        # Prediction misses object b entirely and shifts a by one pixel.
        pred_ids = np.zeros_like(truth.id_map)
        pred_ids[0, 1:3, 2:4] = 1  # only 2 of 4 pixels overlap gt -> IoU 1/3, a FP+FN
        pred_ids[0, truth.id_map[0] == 3] = 3
        pred_ids[0, 3:5, 3:5] = 0
        pred_classes = np.full_like(truth.class_map, VOID_ID)
        pred_classes[pred_ids == 1] = 0
        pred_classes[pred_ids == 3] = 2
        pred = VideoResult(class_map=pred_classes, id_map=pred_ids, tracks={1: 0, 3: 2})
        vpq, per_window = compute_vpq(pred, truth, windows=(1,))
        assert per_window[1] == pytest.approx(brute_force_image_pq(pred, truth, 0), abs=1e-12)

    def test_fragmented_track_monotone_in_window(self):
        seq, truth = _truth(num_frames=6)
        pred = VideoResult(
            class_map=truth.class_map.copy(),
            id_map=truth.id_map.copy(),
            tracks=dict(truth.tracks),
        )
        # Fragment the thing track every two frames.
        next_id = max(pred.tracks) + 1
        for start in (2, 4):
            mask = pred.id_map[start : start + 2] == 1
            pred.id_map[start : start + 2][mask] = next_id
            pred.tracks[next_id] = pred.tracks[1]
            next_id += 1
        vpq, per_window = compute_vpq(pred, truth, windows=(1, 2, 3, 4))
        values = [per_window[k] for k in (1, 2, 3, 4)]
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_window_exceeding_video_rejected(self):
        seq, truth = _truth(num_frames=3)
        with pytest.raises(ParameterError):
            compute_vpq(truth, truth, windows=(5,))


class TestDq:
    def test_exact_depth(self):
        d = np.full((2, 4, 4), 7.0)
        assert compute_dq(d, d) == 1.0

    def test_double_depth_is_outlier(self):
        d = np.full((2, 4, 4), 7.0)
        assert compute_dq(2 * d, d, threshold=1.25) == 0.0

    def test_half_inliers(self):
        gt = np.full((1, 2, 4), 10.0)
        pred = gt.copy()
        pred[0, 0] = 20.0  # top row outliers
        assert compute_dq(pred, gt) == 0.5

    def test_no_valid_pixels(self):
        with pytest.raises(UndefinedMetricError):
            compute_dq(np.ones((1, 2, 2)), np.zeros((1, 2, 2)))

    def test_threshold_must_exceed_one(self):
        d = np.ones((1, 2, 2))
        with pytest.raises(ParameterError):
            compute_dq(d, d, threshold=1.0)

    def test_dstq_composition(self):
        assert dstq_from_components(1.0, 1.0, 1.0) == 1.0
        assert dstq_from_components(0.5, 0.5, 0.5) == pytest.approx(0.5)


class TestEvaluate:
    def test_full_report_on_oracle(self):
        seq, truth = _truth(num_frames=4)
        results = [clip_result_from_annotation(ann, clip) for clip, ann in seq.clips]
        video = stitch_clips(results)
        report = evaluate(video, truth, seq.table, windows=(1, 2, 3, 4))
        assert report.stq == 1.0
        assert report.vpq == 1.0
        assert report.dq == 1.0
        assert report.dstq == 1.0
        lines = report.as_lines()
        assert any(line.startswith("stq\t") for line in lines)
