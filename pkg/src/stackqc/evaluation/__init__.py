from stackqc.evaluation.baselines import baseline_subject_oracle, baseline_volume_rule
from stackqc.evaluation.metrics import (
    agreement_metrics,
    classification_metrics,
    cohen_kappa,
    pearson_r,
    regression_metrics,
    roc_auc,
)
from stackqc.evaluation.protocol import (
    MetricReport,
    report_to_table,
    run_baseline_protocol,
    run_protocol,
)
from stackqc.evaluation.splits import SplitPlan, loso_split, subject_kfold
from stackqc.evaluation.subsample import SubsampleCell, subsample_experiment

__all__ = [
    "agreement_metrics",
    "classification_metrics",
    "cohen_kappa",
    "pearson_r",
    "regression_metrics",
    "roc_auc",
    "MetricReport",
    "report_to_table",
    "run_baseline_protocol",
    "run_protocol",
    "SplitPlan",
    "loso_split",
    "subject_kfold",
    "SubsampleCell",
    "subsample_experiment",
    "baseline_subject_oracle",
    "baseline_volume_rule",
]
