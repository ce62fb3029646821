"""The dataset manifest: one row per stack, TSV on disk.

The manifest binds stacks to subjects, scanners, sites and the train /
pure_test split; it is the source of truth for every grouping decision made
by the evaluation protocols.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

from stackqc.errors import DuplicateStackId, MissingFile, UnknownSplit

SPLITS = ("train", "pure_test")

_COLUMNS = [
    "stack_id",
    "subject_id",
    "session_id",
    "run_id",
    "scanner_id",
    "site_id",
    "split",
    "image_path",
    "mask_path",
    "labelmap_path",
    "tr_ms",
    "te_ms",
]


@dataclass
class StackRecord:
    """Identity and file locations of one stack."""

    stack_id: str
    subject_id: str
    scanner_id: str
    site_id: str
    split: str
    image_path: str
    session_id: str = "1"
    run_id: str = "1"
    mask_path: str = ""
    labelmap_path: str = ""
    tr_ms: float | None = None
    te_ms: float | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise UnknownSplit(f"{self.stack_id}: split {self.split!r} not in {SPLITS}")


def load_manifest(path: str | Path, check_paths: bool = True) -> list[StackRecord]:
    """Load and validate a manifest TSV; rows come back in file order.

    Relative file paths are resolved against the manifest's directory, so a
    generated dataset tree stays relocatable.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    root = path.parent

    def resolve(p: str) -> str:
        if not p:
            return ""
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else root / candidate)

    records: list[StackRecord] = []
    seen: set[str] = set()
    keys: set[tuple[str, str, str]] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        for row in reader:
            rec = StackRecord(
                stack_id=row["stack_id"],
                subject_id=row["subject_id"],
                session_id=row.get("session_id") or "1",
                run_id=row.get("run_id") or "1",
                scanner_id=row["scanner_id"],
                site_id=row["site_id"],
                split=row["split"],
                image_path=resolve(row["image_path"]),
                mask_path=resolve(row.get("mask_path") or ""),
                labelmap_path=resolve(row.get("labelmap_path") or ""),
                tr_ms=float(row["tr_ms"]) if row.get("tr_ms") else None,
                te_ms=float(row["te_ms"]) if row.get("te_ms") else None,
            )
            if rec.stack_id in seen:
                raise DuplicateStackId(rec.stack_id)
            seen.add(rec.stack_id)
            key = (rec.subject_id, rec.session_id, rec.run_id)
            if key in keys:
                raise DuplicateStackId(f"duplicate (subject, session, run) {key}")
            keys.add(key)
            if check_paths:
                for p in (rec.image_path, rec.mask_path, rec.labelmap_path):
                    if p and not Path(p).exists():
                        raise MissingFile(f"{rec.stack_id}: {p}")
            records.append(rec)
    return records


def save_manifest(records: list[StackRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_COLUMNS, delimiter="\t")
        writer.writeheader()
        for rec in records:
            row = asdict(rec)
            row["tr_ms"] = "" if rec.tr_ms is None else repr(rec.tr_ms)
            row["te_ms"] = "" if rec.te_ms is None else repr(rec.te_ms)
            writer.writerow(row)
    return path


def group_by(records: list[StackRecord], key: str) -> dict[str, list[StackRecord]]:
    """Group records by an attribute, preserving first-seen order of groups."""
    out: dict[str, list[StackRecord]] = {}
    for rec in records:
        out.setdefault(getattr(rec, key), []).append(rec)
    return out
