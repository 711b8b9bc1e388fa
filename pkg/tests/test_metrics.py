"""Evaluation metrics against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointcascade.geometry import FaceShape, Frame
from jointcascade.metrics import (
    EvalReport,
    auc_scores,
    evaluate,
    f1_scores,
    normalized_error,
)


def _shape(pts, frame=Frame.IMAGE_PIXELS):
    return FaceShape(np.asarray(pts, dtype=float), frame)


class TestNormalizedError:
    def test_identical_shapes_score_zero(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 100, size=(28, 2))
        assert normalized_error(_shape(pts), _shape(pts), (0, 1)) == 0.0

    def test_single_offset_point(self):
        pts = np.zeros((28, 2))
        pts[:, 0] = np.arange(28.0)  # distinct points; eyes 50 px apart
        pts[0] = [0.0, 0.0]
        pts[1] = [50.0, 0.0]
        pred = pts.copy()
        pred[5, 1] += 5.0
        err = normalized_error(_shape(pred), _shape(pts), (0, 1))
        assert err == pytest.approx((5.0 / 50.0) / 28.0, abs=1e-12)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(1)
        gt = rng.uniform(0, 60, size=(9, 2))
        pred = gt + rng.normal(0, 2, size=(9, 2))
        expect = 0.0
        for i in range(9):
            dx = pred[i, 0] - gt[i, 0]
            dy = pred[i, 1] - gt[i, 1]
            expect += (dx * dx + dy * dy) ** 0.5
        expect /= 9 * np.hypot(*(gt[2] - gt[7]))
        got = normalized_error(_shape(pred), _shape(gt), (2, 7))
        assert got == pytest.approx(expect, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.2, 5.0),
        st.floats(-np.pi, np.pi),
        st.floats(-40, 40),
        st.floats(-40, 40),
    )
    def test_similarity_invariance(self, scale, angle, tx, ty):
        rng = np.random.default_rng(7)
        gt = rng.uniform(0, 50, size=(8, 2))
        pred = gt + rng.normal(0, 3, size=(8, 2))
        base = normalized_error(_shape(pred), _shape(gt), (0, 3))
        rot = scale * np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        t = np.array([tx, ty])
        moved = normalized_error(
            _shape(pred @ rot.T + t), _shape(gt @ rot.T + t), (0, 3)
        )
        assert moved == pytest.approx(base, rel=1e-9, abs=1e-12)

    def test_degenerate_ground_truth_raises(self):
        pts = np.zeros((4, 2))
        with pytest.raises(ValueError):
            normalized_error(_shape(pts + 1), _shape(pts), (0, 1))

    def test_frame_and_count_mismatch(self):
        a = _shape(np.zeros((3, 2)) + [[0, 0], [1, 0], [0, 1]])
        b = _shape([[0, 0], [1, 0], [0, 1]], Frame.CANONICAL)
        with pytest.raises(ValueError):
            normalized_error(a, b, (0, 1))
        c = _shape([[0, 0], [1, 0]])
        with pytest.raises(ValueError):
            normalized_error(a, c, (0, 1))


def f1_counting_oracle(probs, labels, threshold):
    """Explicit per-label confusion counting."""
    m, n = probs.shape
    out = np.zeros(n)
    for i in range(n):
        tp = fp = fn = 0
        for s in range(m):
            pred = probs[s, i] >= threshold
            actual = labels[s, i] == 1
            if pred and actual:
                tp += 1
            elif pred and not actual:
                fp += 1
            elif not pred and actual:
                fn += 1
        out[i] = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return out


class TestF1:
    def test_perfect_predictions(self):
        g = np.array([[1, 0], [0, 1], [1, 1]])
        f1, weighted = f1_scores(g.astype(float), g)
        assert np.array_equal(f1, [1.0, 1.0])
        assert weighted == 1.0

    def test_all_negative_predictions(self):
        g = np.array([[1, 0], [1, 1]])
        f1, weighted = f1_scores(np.zeros((2, 2)), g)
        assert np.array_equal(f1, [0.0, 0.0])
        assert weighted == 0.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 0.9))
    def test_matches_counting_oracle(self, seed, threshold):
        rng = np.random.default_rng(seed)
        probs = rng.random((12, 5))
        labels = rng.integers(0, 2, size=(12, 5))
        f1, weighted = f1_scores(probs, labels, threshold=threshold)
        expect = f1_counting_oracle(probs, labels, threshold)
        assert np.max(np.abs(f1 - expect)) < 1e-12
        freq = labels.sum(0)
        if freq.sum() > 0:
            assert weighted == pytest.approx(
                np.sum(expect * freq) / freq.sum(), abs=1e-12
            )

    def test_weighting_skips_empty_labels(self):
        g = np.array([[1, 0], [1, 0]])
        p = np.array([[0.9, 0.9], [0.1, 0.9]])
        f1, weighted = f1_scores(p, g)
        # label 1 has no positives; weighted mean must equal label 0's F1
        assert weighted == pytest.approx(f1[0], abs=1e-12)

    def test_no_positive_labels_anywhere(self):
        _, weighted = f1_scores(np.full((3, 2), 0.4), np.zeros((3, 2), int))
        assert np.isnan(weighted)

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            f1_scores(np.zeros((1, 1)), np.zeros((1, 1), int), threshold=0.0)


def auc_pairwise_oracle(scores, labels):
    """O(n^2) positive/negative pair comparison; ties count one half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return np.nan
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAUC:
    def test_perfect_separation(self):
        g = np.array([[0], [0], [1], [1]])
        p = np.array([[0.1], [0.2], [0.8], [0.9]])
        auc, weighted = auc_scores(p, g)
        assert auc[0] == 1.0
        assert weighted == 1.0

    def test_constant_scores_give_half(self):
        g = np.array([[0], [1], [0], [1]])
        auc, _ = auc_scores(np.full((4, 1), 0.3), g)
        assert auc[0] == pytest.approx(0.5, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_pairwise_oracle(self, seed):
        rng = np.random.default_rng(seed)
        # quantized scores force plenty of ties
        probs = np.round(rng.random((14, 4)), 1)
        labels = rng.integers(0, 2, size=(14, 4))
        auc, _ = auc_scores(probs, labels)
        for i in range(4):
            expect = auc_pairwise_oracle(probs[:, i], labels[:, i])
            if np.isnan(expect):
                assert np.isnan(auc[i])
            else:
                assert auc[i] == pytest.approx(expect, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        probs = rng.random((20, 3))
        labels = rng.integers(0, 2, size=(20, 3))
        base, _ = auc_scores(probs, labels)
        squashed, _ = auc_scores(1.0 / (1.0 + np.exp(-5.0 * probs)), labels)
        assert np.allclose(base, squashed, atol=1e-12, equal_nan=True)

    def test_single_class_label_is_nan_and_excluded(self):
        g = np.array([[1, 1], [1, 0], [1, 1]])
        p = np.random.default_rng(0).random((3, 2))
        auc, weighted = auc_scores(p, g)
        assert np.isnan(auc[0])
        assert weighted == pytest.approx(auc[1], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_weighted_scores_stay_within_per_label_range(seed):
    rng = np.random.default_rng(seed)
    probs = rng.random((15, 4))
    labels = rng.integers(0, 2, size=(15, 4))
    f1, wf1 = f1_scores(probs, labels)
    auc, wauc = auc_scores(probs, labels)
    freq = labels.sum(0)
    used = freq > 0
    if used.any():
        assert f1[used].min() - 1e-12 <= wf1 <= f1[used].max() + 1e-12
    defined = used & ~np.isnan(auc)
    if defined.any():
        assert auc[defined].min() - 1e-12 <= wauc <= auc[defined].max() + 1e-12


class TestEvalReport:
    def test_round_trip_dict(self):
        rep = EvalReport(
            mean_normalized_error=0.05,
            per_au_f1=np.array([0.5, 0.7]),
            weighted_f1=0.6,
            per_au_auc=np.array([0.8, 0.9]),
            weighted_auc=0.85,
            per_stage_error=(0.08, 0.06, 0.05),
        )
        d = rep.to_dict()
        assert d["mean_normalized_error"] == 0.05
        assert d["per_au_f1"] == [0.5, 0.7]
        assert d["per_stage_error"] == [0.08, 0.06, 0.05]

    def test_validation(self):
        with pytest.raises(ValueError):
            EvalReport(
                mean_normalized_error=-0.1,
                per_au_f1=np.array([0.5]),
                weighted_f1=0.5,
                per_au_auc=np.array([0.5]),
                weighted_auc=0.5,
            )
        with pytest.raises(ValueError):
            EvalReport(
                mean_normalized_error=0.1,
                per_au_f1=np.array([1.5]),
                weighted_f1=0.5,
                per_au_auc=np.array([0.5]),
                weighted_auc=0.5,
            )


class TestEvaluate:
    def test_aggregates_consistently(self):
        rng = np.random.default_rng(0)
        gt_pts = [rng.uniform(10, 50, size=(5, 2)) for _ in range(6)]
        pred_pts = [g + rng.normal(0, 1, size=(5, 2)) for g in gt_pts]
        gt_shapes = [_shape(p) for p in gt_pts]
        pred_shapes = [_shape(p) for p in pred_pts]
        probs = rng.random((6, 3))
        labels = rng.integers(0, 2, size=(6, 3))
        rep = evaluate(pred_shapes, gt_shapes, probs, labels, (0, 4))
        per_sample = [
            normalized_error(p, g, (0, 4))
            for p, g in zip(pred_shapes, gt_shapes)
        ]
        assert rep.mean_normalized_error == pytest.approx(
            np.mean(per_sample), abs=1e-12
        )
        f1, wf1 = f1_scores(probs, labels)
        assert rep.weighted_f1 == pytest.approx(wf1, abs=1e-12)
        assert np.allclose(rep.per_au_f1, f1, atol=1e-12)
