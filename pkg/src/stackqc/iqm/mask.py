"""Mask-based (shape) IQMs: volume, centroid variance, through-plane closing
difference and boundary sharpness."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from stackqc.errors import EmptyMask, TooFewSlices
from stackqc.io.nifti import Mask
from stackqc.iqm.common import center_subset, kept_slices


def mask_volume(mask: Mask, spacing) -> float:
    """Brain-mask volume in mm^3."""
    sx, sy, sz = spacing
    return float(mask.data.sum()) * sx * sy * sz


def slice_centroids(mask: Mask, spacing) -> tuple[np.ndarray, list[int]]:
    """Per-kept-slice in-plane center of mass in mm: array (n, 2), indices."""
    kept = kept_slices(mask.data)
    out = np.empty((len(kept), 2), dtype=np.float64)
    for i, k in enumerate(kept):
        xs, ys = np.nonzero(mask.data[:, :, k])
        out[i, 0] = xs.mean() * spacing[0]
        out[i, 1] = ys.mean() * spacing[1]
    return out, kept


def centroid_stat(mask: Mask, spacing, center_only: bool = False) -> float:
    """var(x) + var(y) of per-slice mask centroids, in mm^2 (population)."""
    if mask.is_empty():
        raise EmptyMask("centroid of empty mask")
    cents, kept = slice_centroids(mask, spacing)
    if center_only:
        keep_set = set(center_subset(kept))
        rows = [i for i, k in enumerate(kept) if k in keep_set]
        cents = cents[rows]
    if cents.shape[0] < 2:
        raise TooFewSlices("centroid variance needs >= 2 kept slices")
    return float(cents[:, 0].var() + cents[:, 1].var())


def close_through_plane(mask_data: np.ndarray, line_len: int) -> np.ndarray:
    """Morphological closing with a 1D line along the through-plane axis.

    Computed on a background-padded stack so the result matches the
    infinite-domain closing: extensive (closed >= original), idempotent, and
    the identity on z-convex masks.
    """
    if line_len % 2 != 1 or line_len < 3:
        raise ValueError("line_len must be an odd int >= 3")
    r = line_len // 2
    structure = np.ones((1, 1, line_len), dtype=bool)
    padded = np.pad(mask_data, ((0, 0), (0, 0), (r, r)))
    dilated = ndimage.binary_dilation(padded, structure=structure, border_value=0)
    closed = ndimage.binary_erosion(dilated, structure=structure, border_value=0)
    return closed[:, :, r:-r]


def closing_diff(mask: Mask, line_len: int = 5, center_only: bool = False) -> float:
    """Fraction of voxels added by through-plane closing: |closed \\ m| / |m|.

    Detects inter-slice motion and dropped slices; exactly 0 for masks whose
    in-plane columns are contiguous along z.
    """
    if mask.is_empty():
        raise EmptyMask("closing of empty mask")
    kept = kept_slices(mask.data)
    span = kept[-1] - kept[0] + 1
    if span < line_len:
        raise TooFewSlices(f"closing needs a kept-slice span >= {line_len}, got {span}")
    closed = close_through_plane(mask.data, line_len)
    added = closed & ~mask.data
    scope = slice(None)
    if center_only:
        keep = center_subset(kept)
        scope = keep
        added = added[:, :, keep]
        original = mask.data[:, :, keep]
    else:
        original = mask.data
    denom = float(original.sum())
    if denom == 0.0:
        raise EmptyMask("no mask voxels in scope")
    return float(added.sum()) / denom


def boundary_band(mask_data: np.ndarray) -> np.ndarray:
    """1-voxel band around the mask boundary, excluding the image border.

    Erosion treats the outside of the grid as foreground so that a mask
    touching the image edge produces no band there.
    """
    structure = ndimage.generate_binary_structure(3, 1)
    dilated = ndimage.binary_dilation(mask_data, structure=structure, border_value=0)
    eroded = ndimage.binary_erosion(mask_data, structure=structure, border_value=1)
    band = dilated & ~eroded
    band[0, :, :] = band[-1, :, :] = False
    band[:, 0, :] = band[:, -1, :] = False
    band[:, :, 0] = band[:, :, -1] = False
    return band


def _step_gradient_magnitude(field: np.ndarray, spacing) -> np.ndarray:
    """Per-voxel gradient magnitude for binary fields (per mm).

    Uses max(|forward|, |backward|) differences per axis, so an axis-aligned
    step scores exactly 1/spacing on both adjacent voxel layers and corner
    voxels accumulate multi-axis components (which is what makes a jagged
    boundary score above a smooth one).
    """
    mag2 = np.zeros_like(field)
    for axis, h in enumerate(spacing):
        fwd = np.abs(np.diff(field, axis=axis, append=np.take(field, [-1], axis=axis)))
        bwd = np.abs(np.diff(field, axis=axis, prepend=np.take(field, [0], axis=axis)))
        mag2 += (np.maximum(fwd, bwd) / h) ** 2
    return np.sqrt(mag2)


def mask_sharpness(mask: Mask, spacing, kernel: str, center_only: bool = False) -> float:
    """Derivative-filter response of the 0/1 mask field over its boundary band.

    ``sobel`` reports the mean gradient magnitude, calibrated so an
    axis-aligned half-space boundary scores 1/spacing along its normal;
    ``laplace`` the mean absolute 6-neighbour Laplacian.  An empty band (mask
    fills the grid) scores 0.
    """
    from stackqc.iqm.intensity import _laplacian

    if mask.is_empty():
        raise EmptyMask("sharpness of empty mask")
    if min(mask.shape) < 3:
        raise EmptyMask("mask grid too small for boundary filters")
    band = boundary_band(mask.data)
    if center_only:
        keep = center_subset(kept_slices(mask.data))
        restricted = np.zeros_like(band)
        restricted[:, :, keep] = band[:, :, keep]
        band = restricted
    field = mask.data.astype(np.float64)
    if kernel == "laplace":
        sel = band[1:-1, 1:-1, 1:-1]
        if not sel.any():
            return 0.0
        return float(np.abs(_laplacian(field, spacing)[sel]).mean())
    if kernel == "sobel":
        if not band.any():
            return 0.0
        return float(_step_gradient_magnitude(field, spacing)[band].mean())
    raise ValueError(f"unknown kernel {kernel!r}")
