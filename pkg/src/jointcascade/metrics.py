"""Evaluation: normalized landmark error, per-label F1 and AUC, reports."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .geometry import FaceShape, interocular_distance


def normalized_error(
    pred: FaceShape, gt: FaceShape, eye_indices: tuple[int, int]
) -> float:
    """Mean landmark distance divided by the ground-truth interocular distance.

    Both shapes must share the frame and landmark count.  The error is
    invariant to similarity transforms applied to both shapes at once.
    """
    if pred.n_points != gt.n_points:
        raise ValueError("shapes disagree on landmark count")
    if pred.frame is not gt.frame:
        raise ValueError("shapes disagree on coordinate frame")
    iod = interocular_distance(gt, *eye_indices)
    if iod <= 0:
        raise ValueError("degenerate ground truth: zero interocular distance")
    dists = np.linalg.norm(pred.points - gt.points, axis=1)
    return float(dists.mean() / iod)


def _check_label_matrices(pred_probs, gt_labels):
    p = np.asarray(pred_probs, dtype=np.float64)
    g = np.asarray(gt_labels)
    if p.ndim != 2 or g.shape != p.shape:
        raise ValueError("predictions and labels must be matching (M, N) arrays")
    if p.shape[0] == 0:
        raise ValueError("need at least one evaluation sample")
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("ground-truth labels must be binary")
    if not np.all(np.isfinite(p)):
        raise ValueError("predicted scores must be finite")
    return p, g.astype(np.int64)


def f1_scores(
    pred_probs, gt_labels, threshold: float = 0.5
) -> tuple[np.ndarray, float]:
    """Per-label F1 at a threshold, plus the frequency-weighted mean.

    F1 = 2*tp / (2*tp + fp + fn); a label with no predicted or true
    positives scores 0.  The weighted mean weights each label by its
    positive ground-truth count and skips labels that never occur (NaN if
    none remain).
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    p, g = _check_label_matrices(pred_probs, gt_labels)
    yhat = (p >= threshold).astype(np.int64)
    tp = np.sum((yhat == 1) & (g == 1), axis=0).astype(np.float64)
    fp = np.sum((yhat == 1) & (g == 0), axis=0).astype(np.float64)
    fn = np.sum((yhat == 0) & (g == 1), axis=0).astype(np.float64)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    freq = g.sum(axis=0).astype(np.float64)
    if freq.sum() == 0:
        weighted = float("nan")
    else:
        weighted = float(np.sum(f1 * freq) / freq.sum())
    return f1, weighted


def auc_scores(pred_probs, gt_labels) -> tuple[np.ndarray, float]:
    """Per-label ranking AUC, plus the frequency-weighted mean.

    AUC is the probability that a random positive outranks a random
    negative, ties counting one half — computed from rank sums.  Labels
    with no positives or no negatives are undefined (NaN) and excluded
    from the weighted mean, which weights by positive counts.
    """
    p, g = _check_label_matrices(pred_probs, gt_labels)
    n_labels = p.shape[1]
    aucs = np.full(n_labels, np.nan)
    for i in range(n_labels):
        pos = g[:, i] == 1
        n_pos = int(pos.sum())
        n_neg = int((~pos).sum())
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = rankdata(p[:, i])
        rank_sum = ranks[pos].sum()
        aucs[i] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    defined = ~np.isnan(aucs)
    freq = g.sum(axis=0).astype(np.float64)
    if not np.any(defined) or freq[defined].sum() == 0:
        weighted = float("nan")
    else:
        weighted = float(
            np.sum(aucs[defined] * freq[defined]) / freq[defined].sum()
        )
    return aucs, weighted


@dataclass(frozen=True)
class EvalReport:
    """Joint evaluation summary over a test set.

    ``per_stage_error`` is an optional trace of mean errors after each
    cascade stage; fields are raw fractions (multiply by 100 for the
    percentage convention used in printed summaries).
    """

    mean_normalized_error: float
    per_au_f1: np.ndarray
    weighted_f1: float
    per_au_auc: np.ndarray
    weighted_auc: float
    per_stage_error: tuple | None = None
    threshold: float = 0.5

    def __post_init__(self):
        f1 = np.asarray(self.per_au_f1, dtype=np.float64)
        auc = np.asarray(self.per_au_auc, dtype=np.float64)
        if self.mean_normalized_error < 0:
            raise ValueError("error cannot be negative")
        if np.any((f1 < 0) | (f1 > 1)):
            raise ValueError("F1 entries must lie in [0, 1]")
        defined = ~np.isnan(auc)
        if np.any((auc[defined] < 0) | (auc[defined] > 1)):
            raise ValueError("AUC entries must lie in [0, 1] where defined")
        object.__setattr__(self, "per_au_f1", f1)
        object.__setattr__(self, "per_au_auc", auc)
        if self.per_stage_error is not None:
            object.__setattr__(
                self,
                "per_stage_error",
                tuple(float(v) for v in self.per_stage_error),
            )

    def to_dict(self) -> dict:
        def _clean(arr):
            return [float(v) for v in np.asarray(arr)]

        doc = {
            "mean_normalized_error": float(self.mean_normalized_error),
            "per_au_f1": _clean(self.per_au_f1),
            "weighted_f1": float(self.weighted_f1),
            "per_au_auc": _clean(self.per_au_auc),
            "weighted_auc": float(self.weighted_auc),
            "threshold": float(self.threshold),
        }
        if self.per_stage_error is not None:
            doc["per_stage_error"] = _clean(self.per_stage_error)
        return doc


def evaluate(
    pred_shapes: list[FaceShape],
    gt_shapes: list[FaceShape],
    pred_probs,
    gt_labels,
    eye_indices: tuple[int, int],
    threshold: float = 0.5,
    per_stage_error=None,
) -> EvalReport:
    """Bundle landmark error and label metrics into one report."""
    if len(pred_shapes) != len(gt_shapes):
        raise ValueError("prediction and ground-truth shape lists differ in length")
    errors = np.array(
        [
            normalized_error(pred, gt, eye_indices)
            for pred, gt in zip(pred_shapes, gt_shapes)
        ]
    )
    if errors.size != np.asarray(pred_probs).shape[0]:
        raise ValueError("shape and label sets disagree on sample count")
    f1, weighted_f1 = f1_scores(pred_probs, gt_labels, threshold)
    auc, weighted_auc = auc_scores(pred_probs, gt_labels)
    return EvalReport(
        mean_normalized_error=float(errors.mean()),
        per_au_f1=f1,
        weighted_f1=weighted_f1,
        per_au_auc=auc,
        weighted_auc=weighted_auc,
        per_stage_error=per_stage_error,
        threshold=threshold,
    )
