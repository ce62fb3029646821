"""Extraction pipeline: evaluate the full catalogue per stack and emit the
332-column feature table.

A metric failure never aborts a stack: the value becomes 0.0 and the paired
``<name>_nan`` flag is set, which keeps every feature a real number (the
models treat the flags as features).  Ingestion-level problems (missing file,
malformed header) do propagate.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import ndimage
from sklearn.base import BaseEstimator

from stackqc.errors import AlignmentError, IqmFailure, MissingInput
from stackqc.io.manifest import StackRecord
from stackqc.io.nifti import LabelMap, Mask, Volume, read_labelmap, read_mask, read_nifti
from stackqc.iqm import intensity as iq
from stackqc.iqm import mask as mq
from stackqc.iqm import seg as sq
from stackqc.iqm.catalogue import IqmDescriptor, build_catalogue, feature_columns
from stackqc.iqm.common import center_subset, kept_slices

IDENTITY_COLUMNS = ["stack_id", "subject_id", "scanner_id", "site_id", "split"]


# --- per-stack context with memoized intermediates ---------------------------


class StackContext:
    """Holds one stack's inputs plus caches shared across catalogue entries."""

    def __init__(
        self,
        vol: Volume,
        mask: Mask | None,
        merged: LabelMap | None,
        dl_slices: list[tuple[int, float, float]] | None = None,
        dl_stack_score: float | None = None,
    ):
        self.vol = vol
        self.mask = mask
        self.merged = merged
        self.dl_slices = dl_slices
        self.dl_stack_score = dl_stack_score
        self.diagnostics: dict[str, int] = {}
        self._pair_tables: dict[tuple, dict[str, list[float]]] = {}
        self._sstats: dict[bool, object] = {}
        self._region_stats: dict[bool, sq.RegionStats] = {}

    def require_mask(self) -> Mask:
        if self.mask is None or self.mask.is_empty():
            raise MissingInput("no usable brain mask")
        return self.mask

    def require_merged(self) -> LabelMap:
        if self.merged is None:
            raise MissingInput("no label map")
        return self.merged

    def pair_table(self, pairing: str, combine: str, window_k: int) -> dict[str, list[float]]:
        key = (pairing, combine, window_k)
        if key not in self._pair_tables:
            self._pair_tables[key] = iq.compute_pair_table(
                self.vol, self.require_mask(), pairing=pairing, window_k=window_k, mask_combine=combine
            )
        return self._pair_tables[key]

    def sstats(self, center_only: bool):
        if center_only not in self._sstats:
            self._sstats[center_only] = iq.summary_stats(
                self.vol, self.require_mask(), center_only=center_only
            )
        return self._sstats[center_only]

    def region_stats(self, center_only: bool) -> sq.RegionStats:
        if center_only not in self._region_stats:
            self._region_stats[center_only] = sq.region_summary_stats(
                self.vol, self.require_merged(), self.vol.spacing, center_only=center_only
            )
        return self._region_stats[center_only]


# --- catalogue compute adapters ------------------------------------------------


def compute_rank_error(ctx: StackContext, center_only, relative, masked):
    mask = ctx.require_mask() if (masked or relative) else None
    return iq.rank_error(ctx.vol, mask, center_only=center_only, relative=relative, masked=masked)


def compute_pair_metric(ctx: StackContext, kind, pairing, combine, aggregate, window_k):
    values = ctx.pair_table(pairing, combine, window_k)[kind]
    if not values:
        raise IqmFailure(f"all pairs skipped for {kind}")
    return float(np.median(values) if aggregate == "median" else np.mean(values))


def compute_sstats(ctx: StackContext, stat, center_only):
    value = ctx.sstats(center_only).field(stat)
    if not np.isfinite(value):
        raise IqmFailure(f"sstats {stat} undefined")
    return value


def compute_entropy(ctx: StackContext, masked, bins):
    region = ctx.require_mask() if masked else None
    return iq.shannon_entropy(ctx.vol, region, bins=bins)


def compute_bias(ctx: StackContext, scope):
    if scope == "full":
        return iq.estimate_bias(ctx.vol, None)
    mask = ctx.require_mask()
    if scope == "center":
        keep = center_subset(kept_slices(mask.data))
        restricted = np.zeros_like(mask.data)
        restricted[:, :, keep] = mask.data[:, :, keep]
        mask = Mask(restricted)
    return iq.estimate_bias(ctx.vol, mask)


def compute_image_filter(ctx: StackContext, kernel, masked):
    region = ctx.require_mask() if masked else None
    return iq.sharpness_filter(ctx.vol, region, kernel)


def compute_mask_volume(ctx: StackContext):
    return mq.mask_volume(ctx.require_mask(), ctx.vol.spacing)


def compute_centroid(ctx: StackContext, center_only):
    return mq.centroid_stat(ctx.require_mask(), ctx.vol.spacing, center_only=center_only)


def compute_closing(ctx: StackContext, center_only, line_len):
    return mq.closing_diff(ctx.require_mask(), line_len=line_len, center_only=center_only)


def compute_mask_filter(ctx: StackContext, kernel, center_only):
    return mq.mask_sharpness(ctx.require_mask(), ctx.vol.spacing, kernel, center_only=center_only)


def compute_seg_sstats(ctx: StackContext, region, stat, center_only):
    stats = ctx.region_stats(center_only)
    if stat == "n":
        # voxel counts are defined (0) even for empty regions
        return float(stats.counts[region])
    value = stats.require(region).field(stat)
    if not np.isfinite(value):
        raise IqmFailure(f"seg sstats {region}/{stat} undefined")
    return value


def compute_seg_volume(ctx: StackContext, region, center_only):
    return ctx.region_stats(center_only).volumes_mm3[region]


def compute_seg_snr(ctx: StackContext, region, center_only):
    stats = ctx.region_stats(center_only)
    if region == "global":
        return sq.snr_global(stats)
    return sq.snr_region(stats, region)


def compute_seg_cnr(ctx: StackContext, center_only):
    return sq.cnr(ctx.region_stats(center_only))


def compute_seg_cjv(ctx: StackContext, center_only):
    return sq.cjv(ctx.region_stats(center_only))


def compute_seg_wm2max(ctx: StackContext, center_only):
    merged = ctx.require_merged()
    slices = sq.seg_slices(merged, center_only=center_only) if center_only else None
    value = sq.wm2max(ctx.vol, ctx.region_stats(center_only), slices=slices)
    if value > 1.0:
        ctx.diagnostics["wm2max_gt_1"] = ctx.diagnostics.get("wm2max_gt_1", 0) + 1
    return value


def compute_dl_slice(ctx: StackContext, score, scope, aggregate):
    if not ctx.dl_slices:
        raise MissingInput("no dl sidecar rows")
    rows = sorted(ctx.dl_slices)
    if scope == "center":
        rows = center_subset(rows)
    if score == "pass_minus_fail":
        vals = [p_pass - p_fail for _, p_pass, p_fail in rows]
    else:
        vals = [p_pass for _, p_pass, _ in rows]
    return float(np.median(vals) if aggregate == "median" else np.mean(vals))


def compute_dl_stack(ctx: StackContext):
    if ctx.dl_stack_score is None:
        raise MissingInput("no dl stack score")
    return float(ctx.dl_stack_score)


def compute_im_size(ctx: StackContext, which):
    sx, sy, sz = ctx.vol.spacing
    return {
        "x": sx,
        "y": sy,
        "z": sz,
        "voxel_volume": sx * sy * sz,
        "inplane_area": sx * sy,
    }[which]


# --- fallback masking (synthetic data only) -------------------------------------


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu's threshold over an intensity sample."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return lo
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    p = hist / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(p)
    w1 = 1.0 - w0
    mu0 = np.cumsum(p * centers)
    mu_t = mu0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_t * w0 - mu0) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return float(centers[int(np.argmax(between))])


def fallback_mask(vol: Volume) -> Mask:
    """Heuristic brain mask for synthetic stacks: Otsu + largest component."""
    data = np.asarray(vol.data, dtype=np.float64)
    fg = data > otsu_threshold(data)
    if not fg.any():
        return Mask(fg)
    labels, n = ndimage.label(fg)
    if n > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
        fg = labels == (int(np.argmax(sizes)) + 1)
    return Mask(fg)


# --- IqmVector and stack-level extraction ------------------------------------------


@dataclass
class IqmVector:
    """Ordered name->value map plus one failure flag per metric."""

    stack_id: str
    values: dict[str, float]
    flags: dict[str, bool]
    diagnostics: dict[str, int] = field(default_factory=dict)

    def n_entries(self) -> int:
        return len(self.values) + len(self.flags)

    def as_row(self) -> dict[str, float]:
        row: dict[str, float] = {}
        for name, value in self.values.items():
            row[name] = value
            row[name + "_nan"] = float(self.flags[name])
        return row


def extract_stack(ctx: StackContext, catalogue: list[IqmDescriptor], stack_id: str) -> IqmVector:
    """Evaluate every catalogue entry; failures become zero + flag."""
    values: dict[str, float] = {}
    flags: dict[str, bool] = {}
    for entry in catalogue:
        try:
            value = float(entry.compute(ctx, **entry.params))
            if not np.isfinite(value):
                raise IqmFailure(f"{entry.name} produced a non-finite value")
            values[entry.name] = value
            flags[entry.name] = False
        except IqmFailure:
            values[entry.name] = 0.0
            flags[entry.name] = True
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as err:  # degenerate inputs must never abort a stack
            values[entry.name] = 0.0
            flags[entry.name] = True
            key = f"unexpected_{type(err).__name__}"
            ctx.diagnostics[key] = ctx.diagnostics.get(key, 0) + 1
    return IqmVector(stack_id=stack_id, values=values, flags=flags, diagnostics=dict(ctx.diagnostics))


def load_dl_sidecar(path: str | Path):
    """Read the optional per-slice probability CSV.

    Rows with a non-negative ``slice_index`` are per-slice scores; a row with
    ``slice_index`` empty or -1 carries the stack-level score in ``p_pass``.
    """
    slices: dict[str, list[tuple[int, float, float]]] = {}
    stack_scores: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid = row["stack_id"]
            idx = row.get("slice_index", "")
            if idx in ("", "-1"):
                stack_scores[sid] = float(row["p_pass"])
            else:
                slices.setdefault(sid, []).append(
                    (int(idx), float(row["p_pass"]), float(row.get("p_fail") or 0.0))
                )
    return slices, stack_scores


def extract_all(
    record: StackRecord,
    catalogue: list[IqmDescriptor],
    label_mapping: dict[int, str] | None = None,
    dl_slices: list[tuple[int, float, float]] | None = None,
    dl_stack_score: float | None = None,
    allow_fallback_mask: bool = True,
) -> IqmVector:
    """Load one stack's files and extract the full catalogue."""
    vol = read_nifti(record.image_path)
    if record.mask_path:
        mask = read_mask(record.mask_path, reference=vol)
    elif allow_fallback_mask:
        mask = fallback_mask(vol)
    else:
        mask = None
    merged = None
    if record.labelmap_path:
        merged = sq.merge_labels(read_labelmap(record.labelmap_path, reference=vol), label_mapping)
    ctx = StackContext(
        vol, mask, merged, dl_slices=dl_slices, dl_stack_score=dl_stack_score
    )
    return extract_stack(ctx, catalogue, record.stack_id)


# --- CSV schema -----------------------------------------------------------------------


def export_csv(vectors: list[IqmVector], records: list[StackRecord], path: str | Path) -> Path:
    """One row per stack: identity columns, then 332 features in catalogue order.

    Floats carry 9 significant digits, so export -> import -> export is
    byte-identical.
    """
    by_id = {rec.stack_id: rec for rec in records}
    if len(by_id) != len(records):
        raise AlignmentError("duplicate stack ids in manifest")
    if sorted(by_id) != sorted(v.stack_id for v in vectors):
        raise AlignmentError("manifest and IQM vectors do not cover the same stack ids")
    columns: list[str] | None = None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for vec in vectors:
            rec = by_id[vec.stack_id]
            row_feats = vec.as_row()
            if columns is None:
                columns = list(row_feats)
                writer.writerow(IDENTITY_COLUMNS + columns)
            ident = [rec.stack_id, rec.subject_id, rec.scanner_id, rec.site_id, rec.split]
            feats = []
            for col in columns:
                v = row_feats[col]
                feats.append(str(int(v)) if col.endswith("_nan") else f"{v:.9g}")
            writer.writerow(ident + feats)
        if columns is None:
            writer.writerow(IDENTITY_COLUMNS + feature_columns(build_catalogue()))
    return path


def read_iqm_csv(path: str | Path) -> pd.DataFrame:
    """Load a feature table; identity columns stay strings, features numeric."""
    df = pd.read_csv(path, dtype={c: str for c in IDENTITY_COLUMNS})
    for col in df.columns:
        if col not in IDENTITY_COLUMNS:
            df[col] = pd.to_numeric(df[col])
    return df


def feature_frame(df: pd.DataFrame) -> pd.DataFrame:
    """Drop identity columns, leaving the model's feature matrix."""
    return df.drop(columns=[c for c in IDENTITY_COLUMNS if c in df.columns])


# --- sklearn-style transformer -----------------------------------------------------


def _extract_worker(args):
    record, params, mapping, dl_slices, dl_stack_score = args
    catalogue = build_catalogue(
        disabled_families=params["disabled_families"],
        window_k=params["window_k"],
        bins=params["bins"],
        closing_line_len=params["closing_line_len"],
    )
    return extract_all(
        record,
        catalogue,
        label_mapping=mapping,
        dl_slices=dl_slices,
        dl_stack_score=dl_stack_score,
        allow_fallback_mask=params["allow_fallback_mask"],
    )


class IqmExtractor(BaseEstimator):
    """Transformer turning stack records into the 332-column feature table.

    Parameters mirror the catalogue knobs; ``transform`` accepts a list of
    :class:`StackRecord` and returns a DataFrame with identity columns plus
    the doubled feature columns in catalogue order.
    """

    def __init__(
        self,
        disabled_families: tuple = (),
        window_k: int = 3,
        bins: int = 128,
        closing_line_len: int = 5,
        allow_fallback_mask: bool = True,
        label_mapping_path: str | None = None,
        dl_sidecar_path: str | None = None,
        jobs: int = 1,
    ):
        self.disabled_families = disabled_families
        self.window_k = window_k
        self.bins = bins
        self.closing_line_len = closing_line_len
        self.allow_fallback_mask = allow_fallback_mask
        self.label_mapping_path = label_mapping_path
        self.dl_sidecar_path = dl_sidecar_path
        self.jobs = jobs

    def fit(self, records=None, y=None):
        self.catalogue_ = build_catalogue(
            disabled_families=tuple(self.disabled_families),
            window_k=self.window_k,
            bins=self.bins,
            closing_line_len=self.closing_line_len,
        )
        self.feature_names_ = feature_columns(self.catalogue_)
        return self

    def transform(self, records: list[StackRecord]) -> pd.DataFrame:
        if not hasattr(self, "catalogue_"):
            self.fit()
        mapping = None
        if self.label_mapping_path:
            mapping = sq.load_label_mapping(self.label_mapping_path)
        dl_slices: dict = {}
        dl_stack: dict = {}
        if self.dl_sidecar_path:
            dl_slices, dl_stack = load_dl_sidecar(self.dl_sidecar_path)
        params = {
            "disabled_families": tuple(self.disabled_families),
            "window_k": self.window_k,
            "bins": self.bins,
            "closing_line_len": self.closing_line_len,
            "allow_fallback_mask": self.allow_fallback_mask,
        }
        jobs = max(1, int(self.jobs))
        tasks = [
            (rec, params, mapping, dl_slices.get(rec.stack_id), dl_stack.get(rec.stack_id))
            for rec in records
        ]
        if jobs == 1 or len(records) < 2:
            vectors = [_extract_worker(t) for t in tasks]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                vectors = list(pool.map(_extract_worker, tasks, chunksize=4))
        rows = []
        for rec, vec in zip(records, vectors):
            row = {
                "stack_id": rec.stack_id,
                "subject_id": rec.subject_id,
                "scanner_id": rec.scanner_id,
                "site_id": rec.site_id,
                "split": rec.split,
            }
            row.update(vec.as_row())
            rows.append(row)
        return pd.DataFrame(rows, columns=IDENTITY_COLUMNS + self.feature_names_)

    def fit_transform(self, records, y=None):
        return self.fit(records).transform(records)
