import numpy as np
import pytest

from topolines.baselines import Polyline
from topolines.components import label_components
from topolines.metrics import (
    baseline_fmeasure,
    confusion_counts,
    line_iou,
    line_match_metrics,
    match_score,
    pixel_iou,
)
from oracles import max_matching_size


def stacked_lines(rows, length=20, width=30):
    labels = np.zeros((max(rows) + 3, width), dtype=np.int32)
    for k, r in enumerate(rows, start=1):
        labels[r, :length] = k
    return labels


class TestPixelIoU:
    def test_identical_masks(self):
        m = np.zeros((5, 5), dtype=bool)
        m[1:3, 1:4] = True
        assert pixel_iou(m, m) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((5, 5), dtype=bool)
        b = np.zeros((5, 5), dtype=bool)
        a[0, :] = True
        b[4, :] = True
        assert pixel_iou(a, b) == 0.0

    def test_counting_case(self):
        a = np.zeros((4, 8), dtype=bool)
        b = np.zeros((4, 8), dtype=bool)
        a[0, 0:8] = True          # 8 pixels
        b[0, 2:8] = True          # overlap 6
        b[1, 0:2] = True          # 8 pixels total
        assert pixel_iou(a, b) == pytest.approx(0.6)

    def test_both_empty_is_one(self):
        assert pixel_iou(np.zeros((3, 3), bool), np.zeros((3, 3), bool)) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = rng.random((8, 8)) < 0.5
        b = rng.random((8, 8)) < 0.5
        assert pixel_iou(a, b) == pixel_iou(b, a)

    def test_confusion_counts_sum_to_size(self):
        rng = np.random.default_rng(1)
        a = rng.random((7, 9)) < 0.5
        b = rng.random((7, 9)) < 0.5
        assert confusion_counts(a, b).total == a.size


class TestMatchScore:
    def test_identical_and_disjoint(self):
        a = np.zeros((4, 4), dtype=bool)
        a[1, :] = True
        assert match_score(a, a) == 1.0
        b = np.zeros((4, 4), dtype=bool)
        b[3, :] = True
        assert match_score(a, b) == 0.0

    def test_counting_case(self):
        a = np.zeros((2, 10), dtype=bool)
        b = np.zeros((2, 10), dtype=bool)
        a[0, 0:8] = True
        b[0, 2:10] = True
        assert match_score(a, b) == pytest.approx(0.6)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = rng.random((6, 6)) < 0.5
        b = rng.random((6, 6)) < 0.5
        if not (a | b).any():
            a[0, 0] = True
        assert match_score(a, b) == match_score(b, a)

    def test_both_empty_is_an_error(self):
        empty = np.zeros((3, 3), dtype=bool)
        with pytest.raises(ValueError, match="empty"):
            match_score(empty, empty)


class TestLineMatchMetrics:
    def test_identical_five_lines(self):
        labels = stacked_lines([1, 4, 7, 10, 13])
        report = line_match_metrics(labels, labels)
        assert report.n_matched == 5
        assert report.dr == report.ra == report.fm == 1.0

    def test_merged_lines_fixture(self):
        # 3 gt lines; prediction fuses the first two into one component
        # and reproduces the third exactly: M=1, DR=1/3, RA=1/2, FM=0.4.
        gt = stacked_lines([2, 6, 10])
        pred = np.zeros_like(gt)
        pred[2, :20] = 1
        pred[6, :20] = 1
        pred[3:6, 5] = 1
        pred[10, :20] = 2
        report = line_match_metrics(gt, pred)
        assert (report.n_matched, report.n_gt, report.n_pred) == (1, 3, 2)
        assert report.dr == pytest.approx(1 / 3)
        assert report.ra == pytest.approx(1 / 2)
        assert report.fm == pytest.approx(0.4)

    def test_empty_prediction_conventions(self):
        gt = stacked_lines([2, 6])
        report = line_match_metrics(gt, np.zeros_like(gt))
        assert report.n_matched == 0
        assert report.dr == report.ra == report.fm == 0.0

    def test_score_exactly_at_threshold_matches(self):
        gt = np.zeros((3, 10), dtype=np.int32)
        pred = np.zeros_like(gt)
        gt[1, 0:3] = 1    # |G|=3, |R|=4, inter=3 -> score 0.75
        pred[1, 0:4] = 1
        report = line_match_metrics(gt, pred, threshold=0.75)
        assert report.n_matched == 1
        just_above = line_match_metrics(gt, pred, threshold=0.7500001)
        assert just_above.n_matched == 0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        gt = rng.integers(0, 4, (12, 12)).astype(np.int32)
        pred = rng.integers(0, 4, (12, 12)).astype(np.int32)
        perm = np.array([0, 3, 1, 2], dtype=np.int32)
        report = line_match_metrics(gt, pred, threshold=0.3)
        shuffled = line_match_metrics(perm[gt], pred, threshold=0.3)
        assert report.n_matched == shuffled.n_matched
        assert report.dr == shuffled.dr and report.ra == shuffled.ra

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(6)
        gt = rng.integers(0, 5, (16, 16)).astype(np.int32)
        pred = rng.integers(0, 5, (16, 16)).astype(np.int32)
        previous = None
        for threshold in (0.2, 0.4, 0.6, 0.8):
            m = line_match_metrics(gt, pred, threshold).n_matched
            if previous is not None:
                assert m <= previous
            previous = m

    def test_fm_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            gt = rng.integers(0, 4, (10, 10)).astype(np.int32)
            pred = rng.integers(0, 4, (10, 10)).astype(np.int32)
            r = line_match_metrics(gt, pred, threshold=0.4)
            assert 0.0 <= r.fm <= max(r.dr, r.ra) + 1e-15
            assert (r.fm == 0.0) == (r.n_matched == 0)

    def test_greedy_equals_exhaustive_matching(self):
        # any overlap threshold above 0.5 keeps candidate degrees at 1,
        # so the greedy pass must find the maximum matching exactly
        rng = np.random.default_rng(8)
        for _ in range(60):
            gt = rng.integers(0, 6, (12, 12)).astype(np.int32)
            pred = rng.integers(0, 6, (12, 12)).astype(np.int32)
            threshold = float(rng.uniform(0.501, 0.9))
            report = line_match_metrics(gt, pred, threshold)
            candidates = [
                (g, p)
                for g in np.unique(gt[gt > 0])
                for p in np.unique(pred[pred > 0])
                if np.count_nonzero((gt == g) & (pred == p))
                / np.count_nonzero((gt == g) | (pred == p))
                >= threshold
            ]
            assert report.n_matched == max_matching_size(candidates)


class TestLineIoU:
    def test_identical_label_maps(self):
        labels = stacked_lines([1, 5, 9])
        assert line_iou(labels, labels) == 1.0

    def test_one_of_two_lines_found(self):
        gt = stacked_lines([2, 6])
        pred = np.zeros_like(gt)
        pred[2, :20] = 1
        assert line_iou(gt, pred) == 0.5

    def test_74_percent_overlap_is_no_match(self):
        gt = np.zeros((4, 110), dtype=np.int32)
        pred = np.zeros_like(gt)
        gt[1, 0:100] = 1
        pred[1, 0:74] = 1  # precision 1.0, recall 0.74
        assert line_iou(gt, pred) == 0.0
        pred[1, 74] = 1    # recall reaches 0.75
        assert line_iou(gt, pred) == 1.0

    def test_both_empty_is_one(self):
        labeled = stacked_lines([1])
        empty = np.zeros_like(labeled)
        assert line_iou(empty, empty) == 1.0
        assert line_iou(labeled, empty) == 0.0


class TestBaselineFMeasure:
    def test_identical_polylines(self):
        lines = [Polyline([(0, 10), (100, 10)]), Polyline([(0, 40), (100, 40)])]
        report = baseline_fmeasure(lines, lines)
        assert report.precision == report.recall == report.f1 == 1.0
        assert len(report.assignments) == 2

    def test_empty_prediction(self):
        gt = [Polyline([(0, 10), (100, 10)])]
        report = baseline_fmeasure(gt, [])
        assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0

    def test_both_empty(self):
        report = baseline_fmeasure([], [])
        assert report.precision == report.recall == report.f1 == 1.0

    def test_tolerance_straddle(self):
        tolerance = 20.0
        gt = [Polyline([(0, 50), (100, 50)])]
        inside = [Polyline([(0, 50 + tolerance - 1), (100, 50 + tolerance - 1)])]
        outside = [Polyline([(0, 50 + tolerance + 1), (100, 50 + tolerance + 1)])]
        assert baseline_fmeasure(gt, inside, tolerance).f1 == 1.0
        assert baseline_fmeasure(gt, outside, tolerance).f1 == 0.0

    def test_unassigned_fragment_hurts_both_sides(self):
        gt = [Polyline([(0, 10), (200, 10)])]
        pred = [Polyline([(0, 10), (80, 10)]), Polyline([(140, 10), (200, 10)])]
        report = baseline_fmeasure(gt, pred, 20.0)
        assert report.f1 < 1.0
        assert len(report.assignments) == 1

    def test_invalid_tolerance(self):
        with pytest.raises(ValueError, match="tolerance"):
            baseline_fmeasure([], [], 0.0)


def test_metrics_work_on_labeled_components_end_to_end():
    mask = np.zeros((12, 40), dtype=bool)
    mask[2, 2:38] = True
    mask[8, 2:38] = True
    labels = label_components(mask)
    assert line_iou(labels, labels) == 1.0
    report = line_match_metrics(labels, labels)
    assert report.n_matched == 2
