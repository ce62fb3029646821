from stackqc.ml.forest import ForestClassifier, ForestRegressor
from stackqc.ml.logistic import LogisticThreshold, fit_logistic_threshold
from stackqc.ml.model_io import load_forest, save_forest
from stackqc.ml.selection import FeatureRanking, correlation_group_rank

__all__ = [
    "ForestClassifier",
    "ForestRegressor",
    "LogisticThreshold",
    "fit_logistic_threshold",
    "load_forest",
    "save_forest",
    "FeatureRanking",
    "correlation_group_rank",
]
