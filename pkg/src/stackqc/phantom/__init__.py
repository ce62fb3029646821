from stackqc.phantom.dataset import GeneratedDataset, gen_dataset, load_labels, within_subject_correlation
from stackqc.phantom.generator import (
    DEFAULT_PROFILE,
    SCANNER_PROFILES,
    GroundTruthQuality,
    PhantomSpec,
    ScannerProfile,
    gen_stack,
    jagged_smooth_pair,
    quality_from_knobs,
)

__all__ = [
    "GeneratedDataset",
    "gen_dataset",
    "load_labels",
    "within_subject_correlation",
    "DEFAULT_PROFILE",
    "SCANNER_PROFILES",
    "GroundTruthQuality",
    "PhantomSpec",
    "ScannerProfile",
    "gen_stack",
    "jagged_smooth_pair",
    "quality_from_knobs",
]
