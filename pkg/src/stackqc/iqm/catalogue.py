"""The frozen IQM catalogue: 166 named metrics over five families.

Every entry resolves to one computation over a stack context; the extraction
pipeline doubles the catalogue with one ``<name>_nan`` failure flag per metric
(332 columns total).  Naming follows the visible feature names of the reduced
model (rank_error_center_relative, closing_mask_full, NCC_intersection,
seg_sstats_BG_N, im_size_z, ...) and fills the remaining variants
systematically as ``<base>[_<variant>]``:

* intensity metrics: bare name = whole stack, ``_center`` = center third of
  the kept slices, ``_full`` = no mask restriction;
* mask metrics: bare name = center third, ``_full`` = whole stack (this is
  the convention the visible names imply);
* pair metrics: bare name = all pairs over the mask union, ``_window`` =
  neighbouring slices only, ``_intersection`` = mask intersection,
  ``_median`` = median instead of mean aggregation over pairs;
* segmentation metrics: per-region suffixes plus ``_center`` variants.

Family sizes are fixed: intensity 60, mask 9, seg 86, dl 6, metadata 5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from stackqc.errors import ConfigConflict

FAMILIES = ("intensity", "mask", "seg", "dl", "metadata")

PAIR_VARIANTS: list[tuple[str, str, str, str]] = []
# (suffix, pairing, combine, aggregate) for the full 32-slot slice_loss family
for _kind in ("MAE", "nMAE", "RMSE", "nRMSE"):
    PAIR_VARIANTS.append((_kind, "all_pairs", "union", "mean"))
    PAIR_VARIANTS.append((f"{_kind}_window", "window", "union", "mean"))
for _kind in ("NCC", "MI", "nMI", "jointEntropy"):
    PAIR_VARIANTS.append((_kind, "all_pairs", "union", "mean"))
    PAIR_VARIANTS.append((f"{_kind}_window", "window", "union", "mean"))
    PAIR_VARIANTS.append((f"{_kind}_intersection", "all_pairs", "intersection", "mean"))
    PAIR_VARIANTS.append((f"{_kind}_window_intersection", "window", "intersection", "mean"))
for _kind in ("PSNR", "SSIM"):
    PAIR_VARIANTS.append((_kind, "all_pairs", "union", "mean"))
    PAIR_VARIANTS.append((f"{_kind}_window", "window", "union", "mean"))
for _kind in ("MAE", "RMSE", "NCC", "SSIM"):
    PAIR_VARIANTS.append((f"{_kind}_median", "all_pairs", "union", "median"))

SSTATS_FIELDS = ("mean", "median", "std", "p05", "p95", "cov", "k")
SEG_SSTATS_FIELDS = ("mean", "median", "p05", "p95", "k", "std", "mad", "N")
SEG_REGIONS = ("BG", "CSF", "GM", "WM")
_FIELD_MAP = {"k": "kurtosis", "N": "n"}


@dataclass(frozen=True)
class IqmDescriptor:
    """One catalogue entry: a unique name bound to a computation."""

    name: str
    family: str
    compute: Callable
    params: dict = field(default_factory=dict)


def _kind_of(suffix: str) -> str:
    return suffix.split("_")[0]


def _build_descriptors(window_k: int, bins: int, line_len: int) -> list[IqmDescriptor]:
    from stackqc.iqm import extractor as ex

    entries: list[IqmDescriptor] = []

    def add(name, family, compute, **params):
        entries.append(IqmDescriptor(name=name, family=family, compute=compute, params=params))

    # -- intensity: rank_error (5)
    for name, center, relative, masked in (
        ("rank_error", False, False, True),
        ("rank_error_relative", False, True, True),
        ("rank_error_center", True, False, True),
        ("rank_error_center_relative", True, True, True),
        ("rank_error_full", False, False, False),
    ):
        add(name, "intensity", ex.compute_rank_error,
            center_only=center, relative=relative, masked=masked)

    # -- intensity: slice_loss (32)
    for suffix, pairing, combine, aggregate in PAIR_VARIANTS:
        add(suffix, "intensity", ex.compute_pair_metric,
            kind=_kind_of(suffix), pairing=pairing, combine=combine,
            aggregate=aggregate, window_k=window_k)

    # -- intensity: sstats (14)
    for center in (False, True):
        for stat in SSTATS_FIELDS:
            name = f"sstats_{stat}" + ("_center" if center else "")
            add(name, "intensity", ex.compute_sstats,
                stat=_FIELD_MAP.get(stat, stat), center_only=center)

    # -- intensity: entropy (2)
    add("entropy", "intensity", ex.compute_entropy, masked=False, bins=bins)
    add("entropy_mask", "intensity", ex.compute_entropy, masked=True, bins=bins)

    # -- intensity: bias (3)
    add("bias_full", "intensity", ex.compute_bias, scope="full")
    add("bias", "intensity", ex.compute_bias, scope="mask")
    add("bias_center", "intensity", ex.compute_bias, scope="center")

    # -- intensity: filter_image (4)
    for kernel in ("Laplace", "sobel"):
        add(f"filter_image_{kernel}", "intensity", ex.compute_image_filter,
            kernel=kernel.lower(), masked=True)
        add(f"filter_image_{kernel}_full", "intensity", ex.compute_image_filter,
            kernel=kernel.lower(), masked=False)

    # -- mask family (9)
    add("mask_volume", "mask", ex.compute_mask_volume)
    add("centroid", "mask", ex.compute_centroid, center_only=True)
    add("centroid_full", "mask", ex.compute_centroid, center_only=False)
    add("closing_mask", "mask", ex.compute_closing, center_only=True, line_len=line_len)
    add("closing_mask_full", "mask", ex.compute_closing, center_only=False, line_len=line_len)
    for kernel in ("Laplace", "sobel"):
        add(f"filter_mask_{kernel}", "mask", ex.compute_mask_filter,
            kernel=kernel.lower(), center_only=True)
        add(f"filter_mask_{kernel}_full", "mask", ex.compute_mask_filter,
            kernel=kernel.lower(), center_only=False)

    # -- seg: sstats (64)
    for center in (False, True):
        for region in SEG_REGIONS:
            for stat in SEG_SSTATS_FIELDS:
                name = f"seg_sstats_{region}_{stat}" + ("_center" if center else "")
                add(name, "seg", ex.compute_seg_sstats,
                    region=region, stat=_FIELD_MAP.get(stat, stat), center_only=center)

    # -- seg: volume (6)
    for center in (False, True):
        for region in ("CSF", "GM", "WM"):
            name = f"seg_volume_{region}" + ("_center" if center else "")
            add(name, "seg", ex.compute_seg_volume, region=region, center_only=center)

    # -- seg: SNR (10)
    for center in (False, True):
        for region in (*SEG_REGIONS, "global"):
            name = f"seg_SNR_{region}" + ("_center" if center else "")
            add(name, "seg", ex.compute_seg_snr, region=region, center_only=center)

    # -- seg: CNR / CJV / WM2Max (2 each)
    for center in (False, True):
        suffix = "_center" if center else ""
        add(f"seg_CNR{suffix}", "seg", ex.compute_seg_cnr, center_only=center)
        add(f"seg_CJV{suffix}", "seg", ex.compute_seg_cjv, center_only=center)
        add(f"seg_WM2Max{suffix}", "seg", ex.compute_seg_wm2max, center_only=center)

    # -- dl (6): reserved columns fed from the optional sidecar
    add("dl_slice", "dl", ex.compute_dl_slice, score="pass_minus_fail", scope="all", aggregate="mean")
    add("dl_slice_center", "dl", ex.compute_dl_slice, score="pass_minus_fail", scope="center", aggregate="mean")
    add("dl_slice_median", "dl", ex.compute_dl_slice, score="pass_minus_fail", scope="all", aggregate="median")
    add("dl_slice_pgood", "dl", ex.compute_dl_slice, score="p_pass", scope="all", aggregate="mean")
    add("dl_slice_pgood_center", "dl", ex.compute_dl_slice, score="p_pass", scope="center", aggregate="mean")
    add("dl_stack", "dl", ex.compute_dl_stack)

    # -- metadata (5)
    add("im_size_x", "metadata", ex.compute_im_size, which="x")
    add("im_size_y", "metadata", ex.compute_im_size, which="y")
    add("im_size_z", "metadata", ex.compute_im_size, which="z")
    add("im_size_voxel_volume", "metadata", ex.compute_im_size, which="voxel_volume")
    add("im_size_inplane_area", "metadata", ex.compute_im_size, which="inplane_area")

    return entries


def build_catalogue(
    disabled_families: tuple[str, ...] = (),
    renames: dict[str, str] | None = None,
    window_k: int = 3,
    bins: int = 128,
    closing_line_len: int = 5,
) -> list[IqmDescriptor]:
    """Build the deterministic IQM catalogue.

    ``disabled_families`` drops whole families; ``renames`` maps default names
    to custom ones (duplicates raise :class:`ConfigConflict`).
    """
    for fam in disabled_families:
        if fam not in FAMILIES:
            raise ConfigConflict(f"unknown family {fam!r}")
    entries = _build_descriptors(window_k=window_k, bins=bins, line_len=closing_line_len)
    entries = [e for e in entries if e.family not in disabled_families]
    if renames:
        entries = [
            IqmDescriptor(
                name=renames.get(e.name, e.name), family=e.family, compute=e.compute, params=e.params
            )
            for e in entries
        ]
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ConfigConflict(f"duplicate IQM names: {dupes}")
    return entries


def family_counts(catalogue: list[IqmDescriptor]) -> dict[str, int]:
    counts = {fam: 0 for fam in FAMILIES}
    for entry in catalogue:
        counts[entry.family] += 1
    return counts


def feature_columns(catalogue: list[IqmDescriptor]) -> list[str]:
    """The 2x-doubled column list: value then ``_nan`` flag per metric."""
    cols = []
    for entry in catalogue:
        cols.append(entry.name)
        cols.append(entry.name + "_nan")
    return cols


def catalogue_manifest_text(catalogue: list[IqmDescriptor]) -> str:
    """Human-readable frozen manifest (shipped under resources/)."""
    lines = ["# stackqc IQM catalogue v1", "position\tname\tfamily\tparams"]
    for i, entry in enumerate(catalogue):
        params = ";".join(f"{k}={v}" for k, v in sorted(entry.params.items()))
        lines.append(f"{i}\t{entry.name}\t{entry.family}\t{params}")
    return "\n".join(lines) + "\n"
