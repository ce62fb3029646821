from stackqc.iqm.catalogue import build_catalogue, family_counts, feature_columns
from stackqc.iqm.extractor import IqmExtractor, IqmVector, export_csv, extract_all, read_iqm_csv

__all__ = [
    "build_catalogue",
    "family_counts",
    "feature_columns",
    "IqmExtractor",
    "IqmVector",
    "export_csv",
    "extract_all",
    "read_iqm_csv",
]
