"""Rule-based comparison baselines.

The volume rule excludes stacks whose brain-mask volume falls below 70% of
their subject's median volume; the subject-wise oracle broadcasts each
subject's mean observed rating to all of its stacks (an oracle because it
reads the true ratings of the evaluated subject).
"""

from __future__ import annotations

from stackqc.io.manifest import StackRecord

VOLUME_RULE_FRACTION = 0.7


def _median(values: list[float]) -> float:
    s = sorted(values)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2.0


def baseline_volume_rule(
    records: list[StackRecord], mask_volumes: dict[str, float]
) -> dict[str, int]:
    """Include/exclude per stack: exclude below 70% of subject-median volume."""
    by_subject: dict[str, list[StackRecord]] = {}
    for rec in records:
        by_subject.setdefault(rec.subject_id, []).append(rec)
    decisions: dict[str, int] = {}
    for recs in by_subject.values():
        median = _median([mask_volumes[r.stack_id] for r in recs])
        for r in recs:
            decisions[r.stack_id] = int(mask_volumes[r.stack_id] >= VOLUME_RULE_FRACTION * median)
    return decisions


def baseline_subject_oracle(
    records: list[StackRecord], ratings: dict[str, float]
) -> dict[str, float]:
    """Subject-mean rating broadcast to all the subject's stacks."""
    by_subject: dict[str, list[StackRecord]] = {}
    for rec in records:
        by_subject.setdefault(rec.subject_id, []).append(rec)
    predictions: dict[str, float] = {}
    for recs in by_subject.values():
        mean = sum(ratings[r.stack_id] for r in recs) / len(recs)
        for r in recs:
            predictions[r.stack_id] = mean
    return predictions
