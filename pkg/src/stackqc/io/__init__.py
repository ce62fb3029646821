from stackqc.io.nifti import LabelMap, Mask, Volume, read_nifti, write_nifti
from stackqc.io.bids import parse_bids_entities, find_stacks
from stackqc.io.manifest import StackRecord, load_manifest, save_manifest

__all__ = [
    "Volume",
    "Mask",
    "LabelMap",
    "read_nifti",
    "write_nifti",
    "parse_bids_entities",
    "find_stacks",
    "StackRecord",
    "load_manifest",
    "save_manifest",
]
