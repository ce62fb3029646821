"""Grouped split planners: subject-wise k-fold and leave-one-scanner-out.

Plans operate on the train-split records only; a group (subject or scanner)
never appears on both sides of a fold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stackqc.errors import TooFewGroups
from stackqc.io.manifest import StackRecord


@dataclass
class Fold:
    name: str
    train_ids: list[str]
    eval_ids: list[str]


@dataclass
class SplitPlan:
    grouping_key: str
    seed: int | None
    folds: list[Fold]

    def check_no_leakage(self, records: list[StackRecord]) -> None:
        """Assert the grouping key never crosses a fold boundary."""
        group_of = {r.stack_id: getattr(r, self.grouping_key) for r in records}
        for fold in self.folds:
            train_groups = {group_of[s] for s in fold.train_ids}
            eval_groups = {group_of[s] for s in fold.eval_ids}
            if train_groups & eval_groups:
                raise AssertionError(
                    f"fold {fold.name}: groups on both sides: {train_groups & eval_groups}"
                )
            if set(fold.train_ids) & set(fold.eval_ids):
                raise AssertionError(f"fold {fold.name}: stack on both sides")


def _train_records(records: list[StackRecord]) -> list[StackRecord]:
    return [r for r in records if r.split == "train"]


def subject_kfold(records: list[StackRecord], k: int = 10, seed: int = 0) -> SplitPlan:
    """Shuffle subjects by seed and deal them round-robin into k folds."""
    records = _train_records(records)
    subjects = sorted({r.subject_id for r in records})
    if len(subjects) < k:
        raise TooFewGroups(f"{len(subjects)} subjects < k={k}")
    rng = np.random.default_rng(seed)
    shuffled = [subjects[i] for i in rng.permutation(len(subjects))]
    folds = []
    for j in range(k):
        eval_subjects = set(shuffled[j::k])
        eval_ids = [r.stack_id for r in records if r.subject_id in eval_subjects]
        train_ids = [r.stack_id for r in records if r.subject_id not in eval_subjects]
        folds.append(Fold(name=f"fold{j}", train_ids=train_ids, eval_ids=eval_ids))
    return SplitPlan(grouping_key="subject_id", seed=seed, folds=folds)


def loso_split(records: list[StackRecord]) -> SplitPlan:
    """One fold per scanner; eval side = all stacks of that scanner."""
    records = _train_records(records)
    scanners = sorted({r.scanner_id for r in records})
    if len(scanners) < 2:
        raise TooFewGroups(f"need >= 2 scanners, got {len(scanners)}")
    folds = []
    for scanner in scanners:
        eval_ids = [r.stack_id for r in records if r.scanner_id == scanner]
        train_ids = [r.stack_id for r in records if r.scanner_id != scanner]
        folds.append(Fold(name=scanner, train_ids=train_ids, eval_ids=eval_ids))
    return SplitPlan(grouping_key="scanner_id", seed=None, folds=folds)
