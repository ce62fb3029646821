"""Shared helpers for IQM computation: slice bookkeeping and summary stats.

All metric math runs in float64 regardless of the volume's storage dtype.
"Kept" slices are those with at least one mask voxel; the "center" subset is
the third of the kept slices closest to the middle of the kept range, which is
what every ``*_center`` variant restricts itself to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stackqc.errors import EmptyRegion
from stackqc.io.nifti import Mask, Volume


def kept_slices(mask_data: np.ndarray) -> list[int]:
    """Indices of through-plane slices with at least one mask voxel."""
    counts = mask_data.reshape(-1, mask_data.shape[2]).sum(axis=0)
    return [int(k) for k in np.nonzero(counts)[0]]


def center_subset(indices: list[int]) -> list[int]:
    """The third of the slices closest to the center of the kept range."""
    n = len(indices)
    if n == 0:
        return []
    n_center = max(1, int(round(n / 3)))
    start = (n - n_center) // 2
    return list(indices[start : start + n_center])


def inplane_bbox(mask_data: np.ndarray) -> tuple[int, int, int, int]:
    """In-plane bounding box (x0, x1, y0, y1), end-exclusive, over all slices."""
    proj = mask_data.any(axis=2)
    xs, ys = np.nonzero(proj)
    if xs.size == 0:
        raise EmptyRegion("mask has no voxels")
    return int(xs.min()), int(xs.max()) + 1, int(ys.min()), int(ys.max()) + 1


@dataclass
class SliceMatrix:
    """Flattened masked slices: row i is slice kept_slices[i] within the bbox."""

    rows: np.ndarray
    kept_slices: list[int]

    @property
    def n_slices(self) -> int:
        return self.rows.shape[0]


def build_slice_matrix(
    vol: Volume,
    mask: Mask | None,
    center_only: bool = False,
    masked: bool = True,
) -> SliceMatrix:
    """Assemble the slice matrix used by the low-rank compressibility score.

    With ``masked`` (default) out-of-mask pixels are zeroed and rows are
    cropped to the mask's in-plane bounding box; without, whole slices are
    used and every slice is kept.
    """
    data = np.asarray(vol.data, dtype=np.float64)
    if masked:
        if mask is None or mask.is_empty():
            raise EmptyRegion("no mask available for masked slice matrix")
        x0, x1, y0, y1 = inplane_bbox(mask.data)
        kept = kept_slices(mask.data)
        if center_only:
            kept = center_subset(kept)
        rows = np.empty((len(kept), (x1 - x0) * (y1 - y0)), dtype=np.float64)
        for i, k in enumerate(kept):
            sl = data[x0:x1, y0:y1, k].copy()
            sl[~mask.data[x0:x1, y0:y1, k]] = 0.0
            rows[i] = sl.ravel()
        return SliceMatrix(rows=rows, kept_slices=kept)
    kept = list(range(data.shape[2]))
    if center_only:
        kept = center_subset(kept)
    rows = np.stack([data[:, :, k].ravel() for k in kept]) if kept else np.empty((0, 0))
    return SliceMatrix(rows=rows, kept_slices=kept)


@dataclass
class SummaryStats:
    """Distribution summary over a voxel selection.

    ``std`` and ``kurtosis`` use population moments (kurtosis is Fisher
    excess, so a Gaussian gives 0); percentiles use linear interpolation;
    ``mad`` is the median absolute deviation from the median.
    """

    mean: float
    median: float
    std: float
    p05: float
    p95: float
    cov: float
    kurtosis: float
    mad: float
    n: int

    def field(self, name: str) -> float:
        return float(getattr(self, name))


def summarize(values: np.ndarray) -> SummaryStats:
    """Compute :class:`SummaryStats` for a 1D selection (raises on empty)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyRegion("empty selection")
    mean = float(values.mean())
    std = float(values.std())
    median = float(np.median(values))
    p05, p95 = (float(v) for v in np.percentile(values, [5.0, 95.0]))
    cov = std / mean if mean != 0.0 else float("nan")
    if std > 0.0:
        kurtosis = float(np.mean((values - mean) ** 4) / std**4 - 3.0)
    else:
        kurtosis = float("nan")
    mad = float(np.median(np.abs(values - median)))
    return SummaryStats(
        mean=mean,
        median=median,
        std=std,
        p05=p05,
        p95=p95,
        cov=cov,
        kurtosis=kurtosis,
        mad=mad,
        n=int(values.size),
    )
