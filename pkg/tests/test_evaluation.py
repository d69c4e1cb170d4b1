"""Tests for greedy matching, 11-point AP, and corpus evaluation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_box
from fuselage import (
    RECALL_GRID,
    GroundTruthFrame,
    InsufficientDataError,
    average_precision,
    evaluate_detections,
    match_detections,
    to_corners,
)


def gt_frame(*objs, frame_id="000000"):
    """Ground truth from (class_id, x, y, w, h) center-form tuples."""
    return GroundTruthFrame(
        frame_id=frame_id,
        objects=tuple(
            (c, to_corners(make_box(mu_x=x, mu_y=y, mu_w=w, mu_h=h, class_id=c)))
            for c, x, y, w, h in objs
        ),
    )


class TestRecallGrid:
    def test_eleven_point_grid(self):
        assert RECALL_GRID == tuple(k / 10.0 for k in range(11))


class TestGroundTruthFrame:
    def test_class_count(self):
        gt = gt_frame((0, 10, 10, 4, 4), (0, 30, 30, 4, 4), (2, 50, 50, 4, 4))
        assert gt.class_count(0) == 2
        assert gt.class_count(1) == 0
        assert gt.class_count(2) == 1

    def test_rejects_bad_class(self):
        box = to_corners(make_box())
        with pytest.raises(ValueError):
            GroundTruthFrame("f", ((3, box),))

    def test_rejects_center_form_objects(self):
        with pytest.raises(ValueError):
            GroundTruthFrame("f", ((0, make_box()),))


class TestMatchDetections:
    def test_exact_overlap_matches(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        det = make_box(mu_x=10, mu_y=10)
        [(d, j, v)] = match_detections([det], gt)
        assert d is det
        assert j == 0
        assert v == 1.0

    def test_gate_is_inclusive(self):
        """A 4x4 box shifted by 2 against itself has IoU 2*4/(2*16-8) = 1/3."""
        gt = gt_frame((0, 10, 10, 4, 4))
        det = make_box(mu_x=12, mu_y=10)
        [(_, j, v)] = match_detections([det], gt, iou_gate=1.0 / 3.0)
        assert j == 0
        np.testing.assert_allclose(v, 1.0 / 3.0)
        [(_, j, v)] = match_detections([det], gt, iou_gate=0.34)
        assert j is None
        assert v == 0.0

    def test_higher_score_claims_first(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        weak = make_box(mu_x=10, mu_y=10, score=0.3)
        strong = make_box(mu_x=10.5, mu_y=10, score=0.9)
        results = match_detections([weak, strong], gt)
        assert [d.score for d, _, _ in results] == [0.9, 0.3]
        assert results[0][1] == 0
        assert results[1][1] is None

    def test_score_tie_keeps_input_order(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        first = make_box(mu_x=10, mu_y=10, score=0.5)
        second = make_box(mu_x=10, mu_y=10, score=0.5)
        results = match_detections([first, second], gt)
        assert results[0][0] is first
        assert results[0][1] == 0
        assert results[1][1] is None

    def test_best_iou_gt_wins(self):
        gt = gt_frame((0, 10, 10, 4, 4), (0, 13, 10, 4, 4))
        det = make_box(mu_x=12.5, mu_y=10)
        [(_, j, _)] = match_detections([det], gt)
        assert j == 1

    def test_iou_tie_takes_lowest_gt_index(self):
        gt = gt_frame((0, 9, 10, 4, 4), (0, 11, 10, 4, 4))
        det = make_box(mu_x=10, mu_y=10)
        [(_, j, v)] = match_detections([det], gt)
        assert j == 0
        np.testing.assert_allclose(v, 0.6)

    def test_class_mismatch_never_matches(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        det = make_box(mu_x=10, mu_y=10, class_id=1)
        [(_, j, v)] = match_detections([det], gt)
        assert j is None
        assert v == 0.0

    @pytest.mark.parametrize("gate", [0.0, 1.0, -0.5, 1.5])
    def test_rejects_bad_gate(self, gate):
        with pytest.raises(ValueError):
            match_detections([], gt_frame((0, 10, 10, 4, 4)), iou_gate=gate)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_no_ground_truth_claimed_twice(self, data):
        n_gt = data.draw(st.integers(1, 5))
        n_det = data.draw(st.integers(0, 8))
        coord = st.floats(0.0, 40.0, allow_nan=False)
        gt = gt_frame(*[(0, data.draw(coord), data.draw(coord), 6, 6) for _ in range(n_gt)])
        dets = [
            make_box(
                mu_x=data.draw(coord),
                mu_y=data.draw(coord),
                mu_w=6,
                mu_h=6,
                score=data.draw(st.floats(0.01, 1.0)),
            )
            for _ in range(n_det)
        ]
        results = match_detections(dets, gt, iou_gate=0.3)
        assert len(results) == len(dets)
        claimed = [j for _, j, _ in results if j is not None]
        assert len(claimed) == len(set(claimed))
        for _, j, v in results:
            if j is not None:
                assert v >= 0.3


class TestAveragePrecision:
    def test_perfect_detection_scores_one(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        matches = match_detections([make_box(mu_x=10, mu_y=10)], gt)
        assert average_precision([(matches, gt)], 0) == 1.0

    def test_half_recall_scores_six_elevenths(self):
        """One of two objects found, no false positives: precision is
        1.0 up to recall 0.5 and unattainable beyond, so six of the
        eleven knots contribute.
        """
        gt = gt_frame((0, 10, 10, 4, 4), (0, 100, 100, 4, 4))
        matches = match_detections([make_box(mu_x=10, mu_y=10)], gt)
        np.testing.assert_allclose(average_precision([(matches, gt)], 0), 6.0 / 11.0)

    def test_interleaved_false_positive(self):
        """Ranking TP(0.9), FP(0.8), TP(0.7) over two objects gives
        max precision 1.0 for recall <= 0.5 and 2/3 above, so
        AP = (6 + 5 * 2/3) / 11 = 28/33.
        """
        gt = gt_frame((0, 10, 10, 4, 4), (0, 100, 100, 4, 4))
        dets = [
            make_box(mu_x=10, mu_y=10, score=0.9),
            make_box(mu_x=50, mu_y=50, score=0.8),
            make_box(mu_x=100, mu_y=100, score=0.7),
        ]
        matches = match_detections(dets, gt)
        np.testing.assert_allclose(average_precision([(matches, gt)], 0), 28.0 / 33.0)

    def test_scores_rank_globally_across_frames(self):
        """A cross-frame FP outranking a TP caps precision at the first
        knot: FP(0.9) then TP(0.5) on one object gives precision 1/2 at
        every attainable recall, so AP = 1/2.
        """
        gt_a = gt_frame((0, 10, 10, 4, 4), frame_id="a")
        gt_b = gt_frame((1, 10, 10, 4, 4), frame_id="b")
        m_a = match_detections([make_box(mu_x=10, mu_y=10, score=0.5)], gt_a)
        m_b = match_detections([make_box(mu_x=50, mu_y=50, score=0.9)], gt_b)
        np.testing.assert_allclose(
            average_precision([(m_a, gt_a), (m_b, gt_b)], 0), 0.5
        )

    def test_no_detections_scores_zero(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        assert average_precision([([], gt)], 0) == 0.0

    def test_zero_ground_truth_raises(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        with pytest.raises(InsufficientDataError):
            average_precision([([], gt)], 1)


class TestEvaluateDetections:
    def test_perfect_corpus(self):
        frames = []
        for i, cls in enumerate((0, 1, 2)):
            gt = gt_frame((cls, 10, 10, 4, 4), frame_id=f"{i:06d}")
            frames.append(([make_box(mu_x=10, mu_y=10, class_id=cls)], gt))
        report = evaluate_detections(frames)
        assert report.m_ap == 1.0
        assert report.counts == (3, 0, 0)
        assert report.excluded_classes == ()
        for cls in (0, 1, 2):
            assert report.per_class[cls].ap == 1.0
            assert report.per_class[cls].n_gt == 1

    def test_zero_gt_class_excluded_from_mean(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        report = evaluate_detections([([make_box(mu_x=10, mu_y=10)], gt)])
        assert report.excluded_classes == (1, 2)
        assert set(report.per_class) == {0}
        assert report.m_ap == 1.0

    def test_false_positives_of_excluded_class_still_counted_nowhere(self):
        """Detections of a class with no ground truth do not enter the
        mean; the per-class table simply omits that class.
        """
        gt = gt_frame((0, 10, 10, 4, 4))
        dets = [make_box(mu_x=10, mu_y=10), make_box(mu_x=50, mu_y=50, class_id=1)]
        report = evaluate_detections([(dets, gt)])
        assert 1 not in report.per_class
        assert report.m_ap == 1.0

    def test_misses_count_as_fn(self):
        gt = gt_frame((0, 10, 10, 4, 4), (0, 50, 50, 4, 4))
        report = evaluate_detections([([make_box(mu_x=10, mu_y=10)], gt)])
        assert report.per_class[0].tp == 1
        assert report.per_class[0].fn == 1
        assert report.per_class[0].fp == 0

    def test_empty_corpus_gives_zero_map(self):
        gt = GroundTruthFrame("f", ())
        report = evaluate_detections([([], gt)])
        assert report.m_ap == 0.0
        assert report.excluded_classes == (0, 1, 2)

    def test_gate_tightening_reduces_map(self):
        gt = gt_frame((0, 10, 10, 4, 4))
        dets = [make_box(mu_x=11, mu_y=10)]
        loose = evaluate_detections([(dets, gt)], iou_gate=0.3)
        tight = evaluate_detections([(dets, gt)], iou_gate=0.7)
        assert loose.m_ap == 1.0
        assert tight.m_ap == 0.0
