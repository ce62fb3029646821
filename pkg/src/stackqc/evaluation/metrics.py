"""Classification, regression and agreement metrics.

Conventions that matter here:

* weighted F1 averages both classes' F1 by true support;
* ROC AUC uses the rank statistic with midranks for ties and is undefined
  (None) when only one class is present;
* R^2 is the coefficient of determination (1 - SSE/SST, can be negative),
  not squared Pearson;
* Spearman is Pearson on midranks;
* Cohen's kappa binarizes at the exclusion threshold and is undefined when
  chance agreement is 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stackqc.errors import NoOverlap

EXCLUSION_THRESHOLD = 1.0


@dataclass
class ClassificationMetrics:
    weighted_f1: float
    roc_auc: float | None
    precision: float
    recall: float

    def as_dict(self) -> dict[str, float | None]:
        return {
            "weighted_f1": self.weighted_f1,
            "roc_auc": self.roc_auc,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass
class RegressionMetrics:
    r2: float | None
    spearman: float | None
    mae: float

    def as_dict(self) -> dict[str, float | None]:
        return {"r2": self.r2, "spearman": self.spearman, "mae": self.mae}


@dataclass
class AgreementMetrics:
    pearson_r: float | None
    kappa: float | None
    n: int


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson_r(a, b) -> float | None:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt((da**2).sum() * (db**2).sum())
    if denom == 0.0:
        return None
    return float((da * db).sum() / denom)


def roc_auc(y_true, scores) -> float | None:
    """Mann-Whitney AUC with midranks; None when a class is missing."""
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((y_true == 1).sum())
    n_neg = int((y_true == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    rank_sum = float(ranks[y_true == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _precision_recall_f1(y_true, y_pred, positive) -> tuple[float, float, float]:
    tp = int(((y_true == positive) & (y_pred == positive)).sum())
    fp = int(((y_true != positive) & (y_pred == positive)).sum())
    fn = int(((y_true == positive) & (y_pred != positive)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def classification_metrics(y_true, scores, threshold: float = 0.5) -> ClassificationMetrics:
    """Weighted F1, ROC AUC, and positive-class precision/recall at threshold."""
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if len(y_true) != len(scores) or len(y_true) == 0:
        raise ValueError("y_true and scores must be non-empty and equal length")
    y_pred = (scores >= threshold).astype(np.int64)
    f1_total = 0.0
    for cls in (0, 1):
        support = int((y_true == cls).sum())
        _, _, f1 = _precision_recall_f1(y_true, y_pred, cls)
        f1_total += support / len(y_true) * f1
    precision, recall, _ = _precision_recall_f1(y_true, y_pred, 1)
    return ClassificationMetrics(
        weighted_f1=f1_total,
        roc_auc=roc_auc(y_true, scores),
        precision=precision,
        recall=recall,
    )


def classification_metrics_from_labels(y_true, y_pred) -> ClassificationMetrics:
    """For rule-based baselines that emit labels, not scores (AUC undefined)."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    f1_total = 0.0
    for cls in (0, 1):
        support = int((y_true == cls).sum())
        _, _, f1 = _precision_recall_f1(y_true, y_pred, cls)
        f1_total += support / len(y_true) * f1
    precision, recall, _ = _precision_recall_f1(y_true, y_pred, 1)
    return ClassificationMetrics(
        weighted_f1=f1_total, roc_auc=None, precision=precision, recall=recall
    )


def regression_metrics(y_true, y_pred) -> RegressionMetrics:
    """R^2 (coefficient of determination), Spearman, MAE."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if len(y_true) != len(y_pred) or len(y_true) < 2:
        raise ValueError("need >= 2 paired values")
    sst = float(((y_true - y_true.mean()) ** 2).sum())
    if sst == 0.0:
        r2 = None
    else:
        sse = float(((y_true - y_pred) ** 2).sum())
        r2 = 1.0 - sse / sst
    spearman = pearson_r(_midranks(y_true), _midranks(y_pred))
    mae = float(np.abs(y_true - y_pred).mean())
    return RegressionMetrics(r2=r2, spearman=spearman, mae=mae)


def cohen_kappa(a_bin, b_bin) -> float | None:
    a = np.asarray(a_bin, dtype=np.int64)
    b = np.asarray(b_bin, dtype=np.int64)
    n = len(a)
    p_o = float((a == b).mean())
    p_e = 0.0
    for cls in (0, 1):
        p_e += float((a == cls).mean()) * float((b == cls).mean())
    if p_e == 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def agreement_metrics(
    ratings_a: dict[str, float],
    ratings_b: dict[str, float],
    exclude_threshold: float = EXCLUSION_THRESHOLD,
) -> AgreementMetrics:
    """Inter-rater Pearson R on raw scores and kappa on include/exclude."""
    common = sorted(set(ratings_a) & set(ratings_b))
    if len(common) < 2:
        raise NoOverlap(f"only {len(common)} stacks rated by both raters")
    a = np.array([ratings_a[s] for s in common], dtype=np.float64)
    b = np.array([ratings_b[s] for s in common], dtype=np.float64)
    kappa = cohen_kappa(
        (a >= exclude_threshold).astype(int), (b >= exclude_threshold).astype(int)
    )
    return AgreementMetrics(pearson_r=pearson_r(a, b), kappa=kappa, n=len(common))
