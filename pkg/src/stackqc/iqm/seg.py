"""Segmentation-based IQMs over a merged BG/CSF/GM/WM label map.

The input segmentation uses study-specific small-integer labels; a merge
table collapses them into the four groups all metrics operate on.  The
default table targets an 8-label fetal scheme (CSF compartments, cortical and
deep gray matter, white matter, cerebellum, brainstem, corpus callosum) with
white matter excluding the corpus callosum; users can override it with a TSV
(columns ``label``, ``group``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stackqc.errors import (
    AllZeroStd,
    ConstantImage,
    EmptyRegion,
    EqualMeans,
    UnmappedLabel,
    ZeroVariance,
)
from stackqc.io.nifti import LabelMap, Volume
from stackqc.iqm.common import SummaryStats, center_subset, summarize

GROUPS = ("BG", "CSF", "GM", "WM")
GROUP_CODES = {name: code for code, name in enumerate(GROUPS)}

# 1: external CSF, 2: cortical GM, 3: WM, 4: ventricles, 5: cerebellum,
# 6: deep GM, 7: brainstem, 8: corpus callosum (kept out of WM).
DEFAULT_LABEL_MERGE: dict[int, str] = {
    0: "BG",
    1: "CSF",
    2: "GM",
    3: "WM",
    4: "CSF",
    5: "BG",
    6: "GM",
    7: "BG",
    8: "BG",
}


def load_label_mapping(path: str | Path) -> dict[int, str]:
    """Read a label->group merge table from TSV."""
    mapping: dict[int, str] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            group = row["group"].strip()
            if group not in GROUPS:
                raise ValueError(f"unknown group {group!r} (expected one of {GROUPS})")
            mapping[int(row["label"])] = group
    return mapping


def merge_labels(seg: LabelMap, mapping: dict[int, str] | None = None) -> LabelMap:
    """Collapse study labels into the four analysis groups.

    Unmapped zero stays background; any other unmapped label raises
    :class:`UnmappedLabel`.
    """
    if mapping is None:
        mapping = DEFAULT_LABEL_MERGE
    present = np.unique(seg.data)
    lut_size = int(present.max()) + 1
    lut = np.zeros(lut_size, dtype=np.int32)
    for label in present:
        label = int(label)
        if label == 0:
            continue
        if label not in mapping:
            raise UnmappedLabel(label)
        lut[label] = GROUP_CODES[mapping[label]]
    return LabelMap(data=lut[seg.data])


@dataclass
class RegionStats:
    """Per-group summary statistics, counts and volumes.

    Groups absent from the evaluation domain carry ``None`` stats; their
    derived IQMs become NaN flags downstream.
    """

    stats: dict[str, SummaryStats | None]
    counts: dict[str, int]
    volumes_mm3: dict[str, float]

    def require(self, group: str) -> SummaryStats:
        st = self.stats[group]
        if st is None:
            raise EmptyRegion(f"region {group} is empty")
        return st


def region_summary_stats(
    vol: Volume, merged: LabelMap, spacing=None, center_only: bool = False
) -> RegionStats:
    """Summary statistics of every group over the evaluation domain.

    The domain is the whole grid, or the center third of the slices carrying
    any nonzero label when ``center_only`` is set; background is everything
    else inside the domain (maternal tissue included).
    """
    if spacing is None:
        spacing = vol.spacing
    data = np.asarray(vol.data, dtype=np.float64)
    labels = merged.data
    if center_only:
        nonzero = [int(k) for k in np.nonzero(labels.reshape(-1, labels.shape[2]).sum(axis=0))[0]]
        if not nonzero:
            raise EmptyRegion("segmentation has no labelled slices")
        keep = center_subset(nonzero)
        data = data[:, :, keep]
        labels = labels[:, :, keep]
    voxel = float(np.prod(spacing))
    stats: dict[str, SummaryStats | None] = {}
    counts: dict[str, int] = {}
    volumes: dict[str, float] = {}
    for group, code in GROUP_CODES.items():
        sel = labels == code
        n = int(sel.sum())
        counts[group] = n
        volumes[group] = n * voxel
        stats[group] = summarize(data[sel]) if n else None
    return RegionStats(stats=stats, counts=counts, volumes_mm3=volumes)


def region_volumes(merged: LabelMap, spacing, center_only: bool = False) -> dict[str, float]:
    """Volume (mm^3) of the CSF/GM/WM groups."""
    labels = merged.data
    if center_only:
        nonzero = [int(k) for k in np.nonzero(labels.reshape(-1, labels.shape[2]).sum(axis=0))[0]]
        if not nonzero:
            raise EmptyRegion("segmentation has no labelled slices")
        labels = labels[:, :, center_subset(nonzero)]
    voxel = float(np.prod(spacing))
    return {
        group: float((labels == GROUP_CODES[group]).sum()) * voxel
        for group in ("CSF", "GM", "WM")
    }


def snr_region(stats: RegionStats, region: str) -> float:
    """Within-region SNR with the small-sample correction sqrt(n/(n-1))."""
    st = stats.require(region)
    if st.n < 2:
        raise EmptyRegion(f"region {region} has fewer than 2 voxels")
    if st.std == 0.0:
        raise ZeroVariance(f"region {region} has zero variance")
    return float(st.mean / (st.std * np.sqrt(st.n / (st.n - 1))))


def snr_global(stats: RegionStats) -> float:
    """Mean of the per-region SNRs that are defined."""
    values = []
    for group in GROUPS:
        try:
            values.append(snr_region(stats, group))
        except (EmptyRegion, ZeroVariance):
            continue
    if not values:
        raise ZeroVariance("no region has a defined SNR")
    return float(np.mean(values))


def cnr(stats: RegionStats) -> float:
    """GM/WM contrast over the pooled BG+WM+GM noise level."""
    wm, gm, bg = stats.require("WM"), stats.require("GM"), stats.require("BG")
    denom = np.sqrt(bg.std**2 + wm.std**2 + gm.std**2)
    if denom == 0.0:
        raise AllZeroStd("all region stds are zero")
    return float(abs(wm.mean - gm.mean) / denom)


def cjv(stats: RegionStats) -> float:
    """Coefficient of joint variation of GM and WM."""
    wm, gm = stats.require("WM"), stats.require("GM")
    if wm.mean == gm.mean:
        raise EqualMeans("WM and GM means are equal")
    return float((wm.std + gm.std) / abs(wm.mean - gm.mean))


def seg_slices(merged: LabelMap, center_only: bool = False) -> list[int]:
    """Slices carrying any nonzero label, optionally reduced to their center third."""
    labels = merged.data
    nonzero = [int(k) for k in np.nonzero(labels.reshape(-1, labels.shape[2]).sum(axis=0))[0]]
    if not nonzero:
        raise EmptyRegion("segmentation has no labelled slices")
    return center_subset(nonzero) if center_only else nonzero


def wm2max(vol: Volume, stats: RegionStats, slices: list[int] | None = None) -> float:
    """White-matter mean over the image's 99.95th intensity percentile.

    ``slices`` restricts the percentile domain (used by the center variant so
    numerator and denominator cover the same slab).  Values above 1 are kept;
    the extractor counts them as a range diagnostic.
    """
    wm = stats.require("WM")
    data = np.asarray(vol.data, dtype=np.float64)
    if slices is not None:
        data = data[:, :, slices]
    flat = data.ravel()
    if flat.max() == flat.min():
        raise ConstantImage("image is constant")
    return float(wm.mean / np.percentile(flat, 99.95))
