"""Scanner-count x training-size subsampling experiment.

For each grid cell (number of scanners, number of training stacks) and each
repetition: sample that many scanners, sample that many stacks from them,
train on the sample and evaluate on every held-out scanner as one fold.
Cell statistics average the per-repetition minimum / median / maximum across
folds and report the median absolute deviation of the per-repetition medians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from stackqc.evaluation.metrics import classification_metrics, regression_metrics
from stackqc.evaluation.protocol import FeatureTable, labels_to_targets
from stackqc.io.manifest import StackRecord
from stackqc.ml.forest import ForestClassifier, ForestRegressor

PRIMARY_METRIC = {"qc": "weighted_f1", "qa": "r2"}


@dataclass
class SubsampleCell:
    n_scanners: int
    n_train: int
    skipped: bool = False
    n_repetitions: int = 0
    min_mean: float | None = None
    median_mean: float | None = None
    max_mean: float | None = None
    median_mad: float | None = None
    per_rep_min: list[float] = field(default_factory=list)
    per_rep_median: list[float] = field(default_factory=list)
    per_rep_max: list[float] = field(default_factory=list)


def subsample_experiment(
    records: list[StackRecord],
    iqm_df: pd.DataFrame,
    labels: dict[str, float],
    scanner_counts: list[int],
    train_sizes: list[int],
    repetitions: int = 20,
    master_seed: int = 0,
    task: str = "qc",
    n_trees: int = 100,
) -> list[SubsampleCell]:
    """Run the full grid; infeasible cells come back marked skipped."""
    train_records = [r for r in records if r.split == "train"]
    by_scanner: dict[str, list[StackRecord]] = {}
    for rec in train_records:
        by_scanner.setdefault(rec.scanner_id, []).append(rec)
    scanners = sorted(by_scanner)
    pool_sizes = sorted((len(v) for v in by_scanner.values()), reverse=True)
    table = FeatureTable(iqm_df)
    targets = labels_to_targets(labels, task)
    metric_name = PRIMARY_METRIC[task]

    cells: list[SubsampleCell] = []
    for i_s, n_sc in enumerate(scanner_counts):
        for i_t, n_tr in enumerate(train_sizes):
            cell = SubsampleCell(n_scanners=n_sc, n_train=n_tr)
            cells.append(cell)
            if n_sc >= len(scanners) or sum(pool_sizes[:n_sc]) < n_tr:
                cell.skipped = True
                continue
            for rep in range(repetitions):
                seed = master_seed + 100_000 * i_s + 1000 * i_t + rep
                rng = np.random.default_rng(seed)
                sampled = None
                for _ in range(100):
                    candidate = list(rng.choice(scanners, size=n_sc, replace=False))
                    pool = [r for s in candidate for r in by_scanner[s]]
                    if len(pool) >= n_tr:
                        sampled = (candidate, pool)
                        break
                if sampled is None:
                    continue
                candidate, pool = sampled
                pick = rng.choice(len(pool), size=n_tr, replace=False)
                train_ids = [pool[i].stack_id for i in sorted(pick)]
                X_train = table.matrix(train_ids)
                y_train = np.array([targets[s] for s in train_ids])
                if task == "qc":
                    if y_train.min() == y_train.max():
                        continue
                    model = ForestClassifier(n_trees=n_trees, seed=seed)
                else:
                    model = ForestRegressor(n_trees=n_trees, seed=seed)
                model.fit(X_train, y_train)
                fold_values = []
                for scanner in scanners:
                    if scanner in candidate:
                        continue
                    eval_ids = [r.stack_id for r in by_scanner[scanner]]
                    X_eval = table.matrix(eval_ids)
                    y_eval = np.array([targets[s] for s in eval_ids])
                    scores = (
                        model.predict_proba(X_eval)[:, 1]
                        if task == "qc"
                        else model.predict(X_eval)
                    )
                    if task == "qc":
                        value = classification_metrics(y_eval, scores).as_dict()[metric_name]
                    else:
                        value = regression_metrics(y_eval, scores).as_dict()[metric_name]
                    if value is not None:
                        fold_values.append(value)
                if not fold_values:
                    continue
                cell.per_rep_min.append(float(np.min(fold_values)))
                cell.per_rep_median.append(float(np.median(fold_values)))
                cell.per_rep_max.append(float(np.max(fold_values)))
                cell.n_repetitions += 1
            if cell.n_repetitions == 0:
                cell.skipped = True
                continue
            cell.min_mean = float(np.mean(cell.per_rep_min))
            cell.median_mean = float(np.mean(cell.per_rep_median))
            cell.max_mean = float(np.mean(cell.per_rep_max))
            med = np.median(cell.per_rep_median)
            cell.median_mad = float(np.median(np.abs(np.array(cell.per_rep_median) - med)))
    return cells


def subsample_table(cells: list[SubsampleCell]) -> str:
    lines = ["n_scanners\tn_train\tstatus\tn_reps\tmin\tmedian\tmax\tmad"]
    for c in cells:
        if c.skipped:
            lines.append(f"{c.n_scanners}\t{c.n_train}\tskipped\t0\t--\t--\t--\t--")
        else:
            lines.append(
                f"{c.n_scanners}\t{c.n_train}\tok\t{c.n_repetitions}"
                f"\t{c.min_mean:.4f}\t{c.median_mean:.4f}\t{c.max_mean:.4f}\t{c.median_mad:.4f}"
            )
    return "\n".join(lines) + "\n"
