"""Synthetic multi-site dataset generation.

Builds a BIDS-lite tree (images, masks, label maps), a manifest and a labels
CSV.  Scanners carry distinct acquisition profiles (spacing, FOV, noise
floor, vendor intensity scale) to create domain shift; each subject draws an
artifact tendency once so stack quality correlates within subject, and every
stack adds its own variation on top.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from stackqc.io.manifest import StackRecord, load_manifest, save_manifest
from stackqc.io.nifti import Volume, write_nifti
from stackqc.phantom.generator import (
    QUALITY_WEIGHTS,
    SCANNER_PROFILES,
    PhantomSpec,
    gen_stack,
)

# caps keep single knobs inside their plausible ranges
KNOB_CAPS = {"motion": 5.0, "drop": 0.8, "bias": 1.5, "noise": 80.0, "fov": 0.4}
PENALTY_SCALE = 5.4
SUBJECT_SPREAD = 0.32
STACK_SPREAD = 0.40


@dataclass
class GeneratedDataset:
    root: Path
    records: list[StackRecord]
    ratings: dict[str, float]
    gt_scores: dict[str, float]
    manifest_path: Path
    labels_path: Path


def _knobs_from_severity(severity: float, proportions: np.ndarray) -> dict[str, float]:
    """Distribute a target quality penalty over the five artifact knobs."""
    target = PENALTY_SCALE * severity
    names = ("motion", "drop", "bias", "noise", "fov")
    knobs = {}
    for name, share in zip(names, proportions):
        raw = share * target / QUALITY_WEIGHTS[name]
        if name == "noise":
            raw *= 25.0  # severity = noise_std / 25
        knobs[name] = float(min(raw, KNOB_CAPS[name]))
    return knobs


def gen_dataset(
    out_dir: str | Path,
    n_sites: int = 2,
    n_scanners_per_site: int = 4,
    n_subjects_per_scanner: int = 10,
    stacks_per_subject: tuple[int, int] = (3, 6),
    master_seed: int = 0,
    pure_test_scanners: int = 0,
    rater_sigma: float = 0.15,
) -> GeneratedDataset:
    """Generate the full synthetic corpus; byte-identical per master_seed."""
    if n_sites < 1 or n_scanners_per_site < 1 or n_subjects_per_scanner < 1:
        raise ValueError("counts must be positive")
    lo, hi = stacks_per_subject
    if not 1 <= lo <= hi:
        raise ValueError("stacks_per_subject must be a nondecreasing positive range")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(master_seed))

    scanners = []
    for site in range(n_sites):
        for j in range(n_scanners_per_site):
            index = site * n_scanners_per_site + j
            scanners.append(
                (f"site{site}", f"site{site}_sc{j}", SCANNER_PROFILES[index % len(SCANNER_PROFILES)])
            )
    n_pure = min(pure_test_scanners, max(0, len(scanners) - 2))
    pure_ids = {scanner_id for _, scanner_id, _ in scanners[len(scanners) - n_pure :]}

    records: list[StackRecord] = []
    ratings: dict[str, float] = {}
    gt_scores: dict[str, float] = {}
    subject_index = 0
    for site_id, scanner_id, profile in scanners:
        split = "pure_test" if scanner_id in pure_ids else "train"
        for _ in range(n_subjects_per_scanner):
            subject_index += 1
            subject_id = f"sub-{subject_index:03d}"
            n_stacks = int(rng.integers(lo, hi + 1))
            # arcsine prior: severities pile at the extremes, like real
            # cohorts where most stacks are clearly usable or clearly not
            subject_base = float(rng.beta(0.5, 0.5))
            brain_scale = float(rng.uniform(0.9, 1.1))
            anat_dir = out_dir / subject_id / "anat"
            anat_dir.mkdir(parents=True, exist_ok=True)
            for run in range(1, n_stacks + 1):
                severity = float(
                    np.clip(subject_base * (1 + SUBJECT_SPREAD * rng.normal())
                            + STACK_SPREAD * rng.normal(), 0.0, 1.4)
                )
                proportions = rng.dirichlet(np.ones(5))
                knobs = _knobs_from_severity(severity, proportions)
                stack_seed = int(rng.integers(0, 2**31 - 1))
                spec = PhantomSpec(
                    seed=stack_seed,
                    profile=profile,
                    motion_shift_std=knobs["motion"],
                    slice_drop_prob=knobs["drop"],
                    bias_amplitude=knobs["bias"],
                    noise_std=knobs["noise"],
                    fov_crop_fraction=knobs["fov"],
                    brain_scale=brain_scale,
                )
                vol, mask, labels, gt = gen_stack(spec)
                base = f"{subject_id}_run-{run}_T2w"
                image_path = write_nifti(vol, anat_dir / f"{base}.nii.gz")
                mask_path = write_nifti(
                    Volume(mask.data.astype(np.float32), vol.spacing, vol.affine),
                    anat_dir / f"{subject_id}_run-{run}_desc-brain_mask.nii.gz",
                    dtype="uint8",
                )
                dseg_path = write_nifti(
                    Volume(labels.data.astype(np.float32), vol.spacing, vol.affine),
                    anat_dir / f"{subject_id}_run-{run}_dseg.nii.gz",
                    dtype="uint8",
                )
                stack_id = f"{subject_id}_run-{run}"
                rating = float(np.clip(gt.score + rater_sigma * rng.normal(), 0.0, 4.0))
                # manifest paths are stored relative to the dataset root so
                # the generated tree is relocatable and byte-reproducible
                records.append(
                    StackRecord(
                        stack_id=stack_id,
                        subject_id=subject_id,
                        scanner_id=scanner_id,
                        site_id=site_id,
                        split=split,
                        image_path=str(image_path.relative_to(out_dir)),
                        mask_path=str(mask_path.relative_to(out_dir)),
                        labelmap_path=str(dseg_path.relative_to(out_dir)),
                        run_id=str(run),
                    )
                )
                ratings[stack_id] = rating
                gt_scores[stack_id] = gt.score

    manifest_path = save_manifest(records, out_dir / "manifest.tsv")
    records = load_manifest(manifest_path)  # hand back resolved paths
    labels_path = out_dir / "labels.csv"
    with open(labels_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stack_id", "rating"])
        for rec in records:
            writer.writerow([rec.stack_id, f"{ratings[rec.stack_id]:.6g}"])
    mapping_path = out_dir / "label_mapping.tsv"
    mapping_path.write_text("label\tgroup\n1\tCSF\n2\tGM\n3\tWM\n")
    return GeneratedDataset(
        root=out_dir,
        records=records,
        ratings=ratings,
        gt_scores=gt_scores,
        manifest_path=manifest_path,
        labels_path=labels_path,
    )


def load_labels(path: str | Path) -> dict[str, float]:
    labels: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            labels[row["stack_id"]] = float(row["rating"])
    return labels


def within_subject_correlation(records: list[StackRecord], ratings: dict[str, float]) -> float:
    """Pearson correlation between stack ratings and their subject means."""
    by_subject: dict[str, list[float]] = {}
    for rec in records:
        by_subject.setdefault(rec.subject_id, []).append(ratings[rec.stack_id])
    xs, ys = [], []
    for values in by_subject.values():
        mean = float(np.mean(values))
        for v in values:
            xs.append(v)
            ys.append(mean)
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    return float(np.corrcoef(xs, ys)[0, 1])
