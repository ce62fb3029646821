"""Quality assessment and quality control for stacks of 2D fetal-brain MR slices.

The package covers the full desk-scale workflow: NIfTI/BIDS ingestion,
extraction of the 332-column image-quality-metric (IQM) table, random-forest
models predicting expert quality ratings (regression on [0, 4]) and
include/exclude decisions (classification at threshold 1.0), grouped
cross-validation protocols with baselines, a synthetic phantom generator for
end-to-end testing, and the HTML report + rating service used to collect the
training labels.
"""

__version__ = "0.1.0"

from stackqc.io.nifti import Volume, read_nifti, write_nifti
from stackqc.io.manifest import StackRecord, load_manifest, save_manifest
from stackqc.iqm.catalogue import build_catalogue
from stackqc.iqm.extractor import IqmExtractor
from stackqc.ml.forest import ForestClassifier, ForestRegressor

__all__ = [
    "Volume",
    "read_nifti",
    "write_nifti",
    "StackRecord",
    "load_manifest",
    "save_manifest",
    "build_catalogue",
    "IqmExtractor",
    "ForestClassifier",
    "ForestRegressor",
    "__version__",
]
