"""Intensity-based IQMs: low-rank compressibility, slice-pair losses, ROI
summary statistics, entropy, bias-level estimate and sharpness filters.

Every operation either returns a finite float or raises an
:class:`~stackqc.errors.IqmFailure` subclass that the extraction pipeline
turns into a zero value plus NaN flag.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from stackqc.errors import (
    DegeneratePair,
    EmptyRegion,
    IqmFailure,
    SingularFit,
    TooFewSlices,
)
from stackqc.io.nifti import Mask, Volume
from stackqc.iqm.common import (
    SummaryStats,
    build_slice_matrix,
    center_subset,
    inplane_bbox,
    kept_slices,
    summarize,
)

PAIR_KINDS = ("MAE", "nMAE", "RMSE", "nRMSE", "NCC", "PSNR", "SSIM", "MI", "nMI", "jointEntropy")
PAIR_HISTOGRAM_BINS = 128
ENTROPY_BINS = 128
PSNR_CAP = 100.0


# --- low-rank compressibility ------------------------------------------------

def rank_error(
    vol: Volume,
    mask: Mask | None,
    center_only: bool = False,
    relative: bool = False,
    threshold: float = 0.01,
    masked: bool = True,
) -> float:
    """Smallest rank whose relative SVD residual is <= threshold, over n.

    The slice matrix holds one flattened (masked, bbox-cropped) slice per row;
    the score is the fraction of slices needed to reproduce the stack up to
    the residual threshold, so inconsistent stacks score higher.  The
    ``relative`` variant divides by the mask volume in cm^3 over the slices
    used.
    """
    sm = build_slice_matrix(vol, mask, center_only=center_only, masked=masked)
    n = sm.n_slices
    if n < 2:
        raise TooFewSlices(f"rank_error needs >= 2 slices, got {n}")
    sigma = np.linalg.svd(sm.rows, compute_uv=False)
    total = float(np.sum(sigma**2))
    if total == 0.0:
        raise IqmFailure("zero-energy slice matrix")
    tail = np.sqrt(np.concatenate([np.cumsum((sigma**2)[::-1])[::-1], [0.0]]) / total)
    # tail[r] = relative residual when keeping r singular values.
    r = int(np.argmax(tail <= threshold))
    score = r / n
    if relative:
        if mask is None:
            raise IqmFailure("relative rank error needs a mask")
        sel = mask.data[:, :, sm.kept_slices]
        volume_cm3 = float(sel.sum()) * vol.voxel_volume_mm3() / 1000.0
        if volume_cm3 == 0.0:
            raise IqmFailure("zero mask volume")
        score /= volume_cm3
    return float(score)


# --- pairwise slice losses ---------------------------------------------------

def _pair_indices(kept: list[int], pairing: str, window_k: int) -> list[tuple[int, int]]:
    pairs = []
    for a in range(len(kept)):
        for b in range(a + 1, len(kept)):
            if pairing == "window" and abs(kept[b] - kept[a]) > window_k:
                continue
            pairs.append((a, b))
    return pairs


def _joint_histogram(a: np.ndarray, b: np.ndarray, bins: int):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        hist = np.zeros((bins, bins))
        hist[0, 0] = a.size
    else:
        hist, _, _ = np.histogram2d(a, b, bins=bins, range=[[lo, hi], [lo, hi]])
    return hist / a.size


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _pair_metrics(a: np.ndarray, b: np.ndarray) -> dict[str, float | None]:
    """All pair metrics for one slice pair; None marks a skipped (degenerate) kind."""
    out: dict[str, float | None] = {}
    diff = a - b
    mae = float(np.mean(np.abs(diff)))
    mse = float(np.mean(diff**2))
    out["MAE"] = mae
    out["RMSE"] = float(np.sqrt(mse))
    denom = float(np.mean((np.abs(a) + np.abs(b)) / 2.0))
    out["nMAE"] = mae / denom if denom > 0 else None
    lo = float(min(a.min(), b.min()))
    hi = float(max(a.max(), b.max()))
    span = hi - lo
    out["nRMSE"] = out["RMSE"] / span if span > 0 else None
    mu_a, mu_b = float(a.mean()), float(b.mean())
    var_a = float(a.var())
    var_b = float(b.var())
    if var_a > 0 and var_b > 0:
        cov = float(np.mean((a - mu_a) * (b - mu_b)))
        out["NCC"] = cov / np.sqrt(var_a * var_b)
        c1, c2 = (0.01 * span) ** 2, (0.03 * span) ** 2
        out["SSIM"] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
            (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        )
    else:
        out["NCC"] = None
        out["SSIM"] = None
    if mse == 0.0:
        out["PSNR"] = PSNR_CAP
    else:
        out["PSNR"] = float(10.0 * np.log10(span**2 / mse))
    pxy = _joint_histogram(a, b, PAIR_HISTOGRAM_BINS)
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    h_x, h_y, h_xy = _entropy(px), _entropy(py), _entropy(pxy.ravel())
    nz = pxy > 0
    mi = float(np.sum(pxy[nz] * np.log2(pxy[nz] / (np.outer(px, py)[nz]))))
    out["MI"] = mi
    out["jointEntropy"] = h_xy
    out["nMI"] = (h_x + h_y) / h_xy if h_xy > 0 else None
    return out


def compute_pair_table(
    vol: Volume,
    mask: Mask | None,
    pairing: str = "all_pairs",
    window_k: int = 3,
    mask_combine: str = "union",
) -> dict[str, list[float]]:
    """Per-pair values for every pair metric under one pairing/combine config.

    Pairs whose pixel selection is empty are skipped entirely; kinds that are
    degenerate on a particular pair (zero variance, zero range) skip only that
    pair.  Used by :func:`slice_pair_metric` and cached by the extractor.
    """
    if mask is None or mask.is_empty():
        if mask_combine != "none":
            raise EmptyRegion("pair metrics need a mask unless mask_combine='none'")
        full = Mask(np.ones(vol.shape, dtype=bool))
        return compute_pair_table(vol, full, pairing, window_k, mask_combine="none")
    data = np.asarray(vol.data, dtype=np.float64)
    x0, x1, y0, y1 = inplane_bbox(mask.data)
    kept = kept_slices(mask.data)
    if len(kept) < 2:
        raise TooFewSlices("pair metrics need >= 2 kept slices")
    if pairing == "window" and window_k < 1:
        raise ValueError("window_k must be >= 1")
    values: dict[str, list[float]] = {kind: [] for kind in PAIR_KINDS}
    slabs = data[x0:x1, y0:y1, :]
    mask_rows = mask.data[x0:x1, y0:y1, :]
    for a_pos, b_pos in _pair_indices(kept, pairing, window_k):
        i, j = kept[a_pos], kept[b_pos]
        if mask_combine == "union":
            sel = mask_rows[:, :, i] | mask_rows[:, :, j]
        elif mask_combine == "intersection":
            sel = mask_rows[:, :, i] & mask_rows[:, :, j]
        elif mask_combine == "none":
            sel = np.ones(mask_rows.shape[:2], dtype=bool)
        else:
            raise ValueError(f"unknown mask_combine {mask_combine!r}")
        if not sel.any():
            continue
        a = slabs[:, :, i][sel]
        b = slabs[:, :, j][sel]
        for kind, value in _pair_metrics(a, b).items():
            if value is not None:
                values[kind].append(float(value))
    return values


def slice_pair_metric(
    vol: Volume,
    mask: Mask | None,
    kind: str,
    pairing: str = "all_pairs",
    window_k: int = 3,
    mask_combine: str = "union",
    aggregate: str = "mean",
) -> float:
    """Aggregate one pair metric over all eligible slice pairs."""
    if kind not in PAIR_KINDS:
        raise ValueError(f"unknown pair metric {kind!r}")
    table = compute_pair_table(vol, mask, pairing, window_k, mask_combine)
    vals = table[kind]
    if not vals:
        raise DegeneratePair(f"all pairs skipped for {kind}")
    if aggregate == "mean":
        return float(np.mean(vals))
    if aggregate == "median":
        return float(np.median(vals))
    raise ValueError(f"unknown aggregate {aggregate!r}")


# --- ROI summary statistics ---------------------------------------------------

def summary_stats(vol: Volume, region: Mask, center_only: bool = False) -> SummaryStats:
    """Summary statistics over the voxels inside ``region``."""
    if region.is_empty():
        raise EmptyRegion("summary_stats region is empty")
    sel = region.data
    if center_only:
        kept = kept_slices(region.data)
        keep = center_subset(kept)
        sel = np.zeros_like(region.data)
        sel[:, :, keep] = region.data[:, :, keep]
    return summarize(np.asarray(vol.data, dtype=np.float64)[sel])


# --- entropy -------------------------------------------------------------------

def shannon_entropy(vol: Volume, region: Mask | None = None, bins: int = ENTROPY_BINS) -> float:
    """Histogram entropy (bits) of the selected voxels."""
    data = np.asarray(vol.data, dtype=np.float64)
    values = data[region.data] if region is not None else data.ravel()
    if values.size == 0:
        raise EmptyRegion("entropy selection is empty")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return 0.0
    hist, _ = np.histogram(values, bins=bins, range=(lo, hi))
    return _entropy(hist / values.size)


# --- bias level ------------------------------------------------------------------

def _design_matrix(coords: np.ndarray, order: int) -> np.ndarray:
    cols = []
    for ix in range(order + 1):
        for iy in range(order + 1 - ix):
            for iz in range(order + 1 - ix - iy):
                cols.append(coords[:, 0] ** ix * coords[:, 1] ** iy * coords[:, 2] ** iz)
    return np.stack(cols, axis=1)


def estimate_bias(vol: Volume, region: Mask | None, order: int = 3) -> float:
    """Coefficient of variation of a smooth multiplicative field fit.

    Fits a 3D polynomial of total degree ``order`` to the log-intensities of
    the selection (least squares), exponentiates the fit and reports std/mean
    of the resulting field over the selection.  Larger values mean more bias.
    """
    data = np.asarray(vol.data, dtype=np.float64)
    if region is not None:
        if region.is_empty():
            raise EmptyRegion("bias region is empty")
        sel = np.nonzero(region.data)
    else:
        sel = np.nonzero(np.ones(vol.shape, dtype=bool))
    values = data[sel]
    lo = float(values.min())
    if lo <= 0.0:
        values = values + (1.0 - lo)
    coords = np.stack(
        [2.0 * np.asarray(sel[k], dtype=np.float64) / max(vol.shape[k] - 1, 1) - 1.0 for k in range(3)],
        axis=1,
    )
    design = _design_matrix(coords, order)
    coef, _, rank, _ = np.linalg.lstsq(design, np.log(values), rcond=None)
    if rank < design.shape[1]:
        raise SingularFit(f"bias fit rank {rank} < {design.shape[1]} terms")
    field = np.exp(design @ coef)
    mean = float(field.mean())
    if mean == 0.0:
        raise IqmFailure("degenerate bias field")
    return float(field.std() / mean)


# --- sharpness -------------------------------------------------------------------

def _laplacian(data: np.ndarray, spacing) -> np.ndarray:
    """6-neighbour Laplacian (per mm^2) on the interior grid."""
    core = data[1:-1, 1:-1, 1:-1]
    lap = np.zeros_like(core)
    slicers = [
        ((slice(2, None), slice(1, -1), slice(1, -1)), (slice(None, -2), slice(1, -1), slice(1, -1)), 0),
        ((slice(1, -1), slice(2, None), slice(1, -1)), (slice(1, -1), slice(None, -2), slice(1, -1)), 1),
        ((slice(1, -1), slice(1, -1), slice(2, None)), (slice(1, -1), slice(1, -1), slice(None, -2)), 2),
    ]
    for plus, minus, axis in slicers:
        lap += (data[plus] - 2.0 * core + data[minus]) / spacing[axis] ** 2
    return lap


def _sobel_magnitude(data: np.ndarray, spacing, norm_per_axis: float) -> np.ndarray:
    """3D Sobel gradient magnitude (per mm) on the interior grid."""
    mag2 = np.zeros_like(data)
    for axis in range(3):
        g = ndimage.sobel(data, axis=axis, mode="nearest") / (norm_per_axis * spacing[axis])
        mag2 += g**2
    return np.sqrt(mag2)[1:-1, 1:-1, 1:-1]


def sharpness_filter(vol: Volume, region: Mask | None, kernel: str) -> float:
    """Image sharpness from derivative filters over the selection interior.

    ``laplace`` reports the variance of the 6-neighbour Laplacian response;
    ``sobel`` the mean Sobel gradient magnitude (calibrated so a linear ramp
    of slope a gives a).  Both are spacing-aware.
    """
    if min(vol.shape) < 3:
        raise IqmFailure("sharpness needs >= 3 voxels along every axis")
    data = np.asarray(vol.data, dtype=np.float64)
    if region is not None:
        if region.is_empty():
            raise EmptyRegion("sharpness region is empty")
        sel = region.data[1:-1, 1:-1, 1:-1]
    else:
        sel = np.ones((vol.shape[0] - 2, vol.shape[1] - 2, vol.shape[2] - 2), dtype=bool)
    if not sel.any():
        raise EmptyRegion("selection has no interior voxels")
    if kernel == "laplace":
        response = _laplacian(data, vol.spacing)[sel]
        return float(response.var())
    if kernel == "sobel":
        response = _sobel_magnitude(data, vol.spacing, norm_per_axis=32.0)[sel]
        return float(response.mean())
    raise ValueError(f"unknown kernel {kernel!r}")
