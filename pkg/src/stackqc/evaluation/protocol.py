"""Protocol runner: fit/evaluate forests under the three evaluation settings.

* subject_cv: subject-wise 10-fold cross-validation on the train split;
* loso: leave-one-scanner-out cross-validation on the train split;
* pure_test: train once on the whole train split, evaluate on the pure_test
  split grouped by scanner.

Each repetition reseeds the plan and the forests (seeds derived from the
master seed by fixed arithmetic and recorded in the report).  Fold metrics
aggregate into the median across all folds and the mean of each repetition's
worst fold; undefined entries (single-class AUC, zero-variance R^2) are
excluded and counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from stackqc.errors import ScopeEmpty
from stackqc.evaluation.baselines import baseline_subject_oracle, baseline_volume_rule
from stackqc.evaluation.metrics import (
    EXCLUSION_THRESHOLD,
    classification_metrics,
    classification_metrics_from_labels,
    regression_metrics,
)
from stackqc.evaluation.splits import Fold, SplitPlan, loso_split, subject_kfold
from stackqc.io.manifest import StackRecord
from stackqc.ml.forest import ForestClassifier, ForestRegressor

PROTOCOLS = ("subject_cv", "loso", "pure_test")
TASKS = ("qc", "qa")
QC_METRICS = ("weighted_f1", "roc_auc", "precision", "recall")
QA_METRICS = ("r2", "spearman", "mae")
# metrics where smaller is better (worst fold = max)
LOWER_IS_BETTER = {"mae"}


@dataclass
class FoldResult:
    repetition: int
    fold: str
    n_eval: int
    metrics: dict[str, float | None]


@dataclass
class MetricReport:
    task: str
    protocol: str
    method: str
    fold_results: list[FoldResult]
    scanner_results: list[FoldResult]
    aggregates: dict[str, dict[str, float | None]]
    seeds: list[int] = field(default_factory=list)
    n_undefined: dict[str, int] = field(default_factory=dict)

    def metric_names(self) -> tuple[str, ...]:
        return QC_METRICS if self.task == "qc" else QA_METRICS


def labels_to_targets(labels: dict[str, float], task: str) -> dict[str, float]:
    if task == "qc":
        return {sid: float(r >= EXCLUSION_THRESHOLD) for sid, r in labels.items()}
    return dict(labels)


def _aggregate(fold_results: list[FoldResult], names) -> tuple[dict, dict]:
    aggregates: dict[str, dict[str, float | None]] = {}
    undefined: dict[str, int] = {}
    for name in names:
        values = [fr.metrics[name] for fr in fold_results]
        defined = [v for v in values if v is not None]
        undefined[name] = len(values) - len(defined)
        if not defined:
            aggregates[name] = {"median": None, "worst_mean": None}
            continue
        worst_per_rep: dict[int, float] = {}
        for fr in fold_results:
            v = fr.metrics[name]
            if v is None:
                continue
            rep = fr.repetition
            if rep not in worst_per_rep:
                worst_per_rep[rep] = v
            elif name in LOWER_IS_BETTER:
                worst_per_rep[rep] = max(worst_per_rep[rep], v)
            else:
                worst_per_rep[rep] = min(worst_per_rep[rep], v)
        aggregates[name] = {
            "median": float(np.median(defined)),
            "worst_mean": float(np.mean(list(worst_per_rep.values()))),
        }
    return aggregates, undefined


class FeatureTable:
    """stack_id-indexed view of the IQM table restricted to feature columns."""

    def __init__(self, iqm_df: pd.DataFrame, feature_subset: list[str] | None = None):
        from stackqc.iqm.extractor import IDENTITY_COLUMNS

        self.df = iqm_df.set_index(iqm_df["stack_id"].astype(str))
        feats = [c for c in iqm_df.columns if c not in IDENTITY_COLUMNS]
        if feature_subset is not None:
            missing = [c for c in feature_subset if c not in feats]
            if missing:
                raise KeyError(f"feature subset not in table: {missing[:5]}")
            feats = list(feature_subset)
        self.feature_names = feats

    def matrix(self, stack_ids: list[str]) -> pd.DataFrame:
        return self.df.loc[stack_ids, self.feature_names]

    def column(self, name: str) -> dict[str, float]:
        return {str(k): float(v) for k, v in self.df[name].items()}


def _make_plan(protocol, records, seed, k=10):
    if protocol == "subject_cv":
        return subject_kfold(records, k=k, seed=seed)
    if protocol == "loso":
        return loso_split(records)
    if protocol == "pure_test":
        train_ids = [r.stack_id for r in records if r.split == "train"]
        eval_records = [r for r in records if r.split == "pure_test"]
        if not eval_records:
            raise ScopeEmpty("no pure_test records")
        if not train_ids:
            raise ScopeEmpty("no train records")
        folds = [Fold(name="pure_test", train_ids=train_ids,
                      eval_ids=[r.stack_id for r in eval_records])]
        return SplitPlan(grouping_key="scanner_id", seed=None, folds=folds)
    raise ValueError(f"unknown protocol {protocol!r}")


def _fold_metrics(task, y_true, scores):
    if task == "qc":
        return classification_metrics(y_true, scores).as_dict()
    if len(y_true) < 2:
        # singleton scanner groups: regression metrics are undefined, marked
        return {name: None for name in QA_METRICS}
    return regression_metrics(y_true, scores).as_dict()


def run_protocol(
    records: list[StackRecord],
    iqm_df: pd.DataFrame,
    labels: dict[str, float],
    protocol: str,
    task: str,
    repetitions: int = 5,
    master_seed: int = 0,
    n_trees: int = 100,
    feature_subset: list[str] | None = None,
    k: int = 10,
) -> MetricReport:
    """Fit and evaluate the forest once per fold per repetition."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    table = FeatureTable(iqm_df, feature_subset)
    targets = labels_to_targets(labels, task)
    scanner_of = {r.stack_id: r.scanner_id for r in records}

    fold_results: list[FoldResult] = []
    scanner_results: list[FoldResult] = []
    seeds: list[int] = []
    for rep in range(repetitions):
        rep_seed = master_seed + 1000 * rep
        seeds.append(rep_seed)
        plan = _make_plan(protocol, records, rep_seed, k=k)
        for fold_index, fold in enumerate(plan.folds):
            forest_seed = rep_seed + fold_index
            X_train = table.matrix(fold.train_ids)
            y_train = np.array([targets[s] for s in fold.train_ids])
            if task == "qc":
                model = ForestClassifier(n_trees=n_trees, seed=forest_seed)
            else:
                model = ForestRegressor(n_trees=n_trees, seed=forest_seed)
            model.fit(X_train, y_train)
            X_eval = table.matrix(fold.eval_ids)
            scores = (
                model.predict_proba(X_eval)[:, 1] if task == "qc" else model.predict(X_eval)
            )
            y_eval = np.array([targets[s] for s in fold.eval_ids])
            if protocol == "pure_test":
                # grouped by scanner: each scanner is its own fold entry
                groups: dict[str, list[int]] = {}
                for i, sid in enumerate(fold.eval_ids):
                    groups.setdefault(scanner_of[sid], []).append(i)
                for scanner, idx in sorted(groups.items()):
                    fr = FoldResult(
                        repetition=rep,
                        fold=scanner,
                        n_eval=len(idx),
                        metrics=_fold_metrics(task, y_eval[idx], scores[idx]),
                    )
                    fold_results.append(fr)
                    scanner_results.append(fr)
            else:
                fold_results.append(
                    FoldResult(
                        repetition=rep,
                        fold=fold.name,
                        n_eval=len(fold.eval_ids),
                        metrics=_fold_metrics(task, y_eval, scores),
                    )
                )
                groups = {}
                for i, sid in enumerate(fold.eval_ids):
                    groups.setdefault(scanner_of[sid], []).append(i)
                for scanner, idx in sorted(groups.items()):
                    if len(idx) < 2:
                        continue
                    scanner_results.append(
                        FoldResult(
                            repetition=rep,
                            fold=f"{fold.name}/{scanner}",
                            n_eval=len(idx),
                            metrics=_fold_metrics(task, y_eval[idx], scores[idx]),
                        )
                    )
    names = QC_METRICS if task == "qc" else QA_METRICS
    aggregates, undefined = _aggregate(fold_results, names)
    return MetricReport(
        task=task,
        protocol=protocol,
        method="forest",
        fold_results=fold_results,
        scanner_results=scanner_results,
        aggregates=aggregates,
        seeds=seeds,
        n_undefined=undefined,
    )


def run_baseline_protocol(
    records: list[StackRecord],
    labels: dict[str, float],
    protocol: str,
    task: str,
    mask_volumes: dict[str, float] | None = None,
    k: int = 10,
    seed: int = 0,
) -> MetricReport:
    """Evaluate the rule-based baselines under the same fold structure.

    QC uses the brain-volume rule (labels only, AUC undefined); QA uses the
    subject-wise oracle.  Both are deterministic, so a single repetition.
    """
    plan = _make_plan(protocol, records, seed, k=k)
    targets = labels_to_targets(labels, task)
    rec_of = {r.stack_id: r for r in records}
    scanner_of = {r.stack_id: r.scanner_id for r in records}
    fold_results: list[FoldResult] = []
    for fold in plan.folds:
        eval_records = [rec_of[s] for s in fold.eval_ids]
        y_eval = np.array([targets[s] for s in fold.eval_ids])
        if task == "qc":
            if mask_volumes is None:
                raise ValueError("volume-rule baseline needs mask volumes")
            decisions = baseline_volume_rule(eval_records, mask_volumes)
            y_pred = np.array([decisions[s] for s in fold.eval_ids])

            def metric_fn(yt, yp):
                return classification_metrics_from_labels(yt, yp).as_dict()
        else:
            predictions = baseline_subject_oracle(eval_records, labels)
            y_pred = np.array([predictions[s] for s in fold.eval_ids])

            def metric_fn(yt, yp):
                if len(yt) < 2:
                    return {name: None for name in QA_METRICS}
                return regression_metrics(yt, yp).as_dict()
        if protocol == "pure_test":
            groups: dict[str, list[int]] = {}
            for i, sid in enumerate(fold.eval_ids):
                groups.setdefault(scanner_of[sid], []).append(i)
            for scanner, idx in sorted(groups.items()):
                fold_results.append(
                    FoldResult(0, scanner, len(idx), metric_fn(y_eval[idx], y_pred[idx]))
                )
        else:
            fold_results.append(FoldResult(0, fold.name, len(fold.eval_ids), metric_fn(y_eval, y_pred)))
    names = QC_METRICS if task == "qc" else QA_METRICS
    aggregates, undefined = _aggregate(fold_results, names)
    method = "volume_rule" if task == "qc" else "subject_oracle"
    return MetricReport(
        task=task,
        protocol=protocol,
        method=method,
        fold_results=fold_results,
        scanner_results=list(fold_results),
        aggregates=aggregates,
        seeds=[seed],
        n_undefined=undefined,
    )


def report_to_table(reports: list[MetricReport]) -> str:
    """TSV with one row per method: 'median (worst_mean)' per metric column."""
    if not reports:
        return ""
    names = reports[0].metric_names()
    lines = ["method\t" + "\t".join(names)]
    for report in reports:
        cells = []
        for name in names:
            agg = report.aggregates[name]
            if agg["median"] is None:
                cells.append("--")
            else:
                cells.append(f"{agg['median']:.3f} ({agg['worst_mean']:.3f})")
        lines.append(report.method + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def scanner_breakdown_table(report: MetricReport) -> str:
    """TSV of per-scanner fold entries (the per-scanner results view)."""
    names = report.metric_names()
    lines = ["repetition\tfold\tn_eval\t" + "\t".join(names)]
    for fr in report.scanner_results:
        cells = [str(fr.repetition), fr.fold, str(fr.n_eval)]
        for name in names:
            v = fr.metrics[name]
            cells.append("--" if v is None else f"{v:.6g}")
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
