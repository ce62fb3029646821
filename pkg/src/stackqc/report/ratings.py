"""Rating records, the append-only JSONL log, and label aggregation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from stackqc.errors import CorruptRatings

ORIENTATIONS = ("axial", "coronal", "sagittal", "other")
ARTIFACT_KEYS = ("motion_inplane", "motion_throughplane", "bias", "noise", "fov_incomplete")
GRADINGS = ("none", "mild", "moderate", "severe")


@dataclass
class RatingRecord:
    """One rating event as stored on disk (timestamp is server-stamped)."""

    stack_id: str
    rater_id: str
    quality: float
    orientation: str = "other"
    artifacts: dict[str, str] = field(default_factory=dict)
    comment: str = ""
    duration_s: float = 0.0
    timestamp: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def validate_rating_payload(payload) -> list[str]:
    """Validation problems of a wire payload (empty list when acceptable)."""
    problems: list[str] = []
    if not isinstance(payload, dict):
        return ["body must be a JSON object"]
    for key in ("stack_id", "rater_id"):
        value = payload.get(key)
        if not isinstance(value, str) or not value:
            problems.append(f"{key} must be a non-empty string")
    quality = payload.get("quality")
    if not isinstance(quality, (int, float)) or isinstance(quality, bool):
        problems.append("quality must be a number")
    elif not 0.0 <= float(quality) <= 4.0:
        problems.append("quality must be within [0, 4]")
    orientation = payload.get("orientation", "other")
    if orientation not in ORIENTATIONS:
        problems.append(f"orientation must be one of {ORIENTATIONS}")
    artifacts = payload.get("artifacts", {})
    if not isinstance(artifacts, dict):
        problems.append("artifacts must be an object")
    else:
        for key, grading in artifacts.items():
            if key not in ARTIFACT_KEYS:
                problems.append(f"unknown artifact {key!r}")
            elif grading not in GRADINGS:
                problems.append(f"artifact {key}: grading must be one of {GRADINGS}")
    duration = payload.get("duration_s", 0.0)
    if not isinstance(duration, (int, float)) or isinstance(duration, bool) or duration < 0:
        problems.append("duration_s must be a non-negative number")
    if not isinstance(payload.get("comment", ""), str):
        problems.append("comment must be a string")
    return problems


def rating_from_payload(payload: dict, timestamp: str) -> RatingRecord:
    return RatingRecord(
        stack_id=payload["stack_id"],
        rater_id=payload["rater_id"],
        quality=float(payload["quality"]),
        orientation=payload.get("orientation", "other"),
        artifacts=dict(payload.get("artifacts", {})),
        comment=payload.get("comment", ""),
        duration_s=float(payload.get("duration_s", 0.0)),
        timestamp=timestamp,
    )


def append_rating(path: str | Path, record: RatingRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")


def read_ratings(path: str | Path) -> list[RatingRecord]:
    """Parse the JSONL log; any bad line raises CorruptRatings."""
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            records.append(
                RatingRecord(
                    stack_id=data["stack_id"],
                    rater_id=data["rater_id"],
                    quality=float(data["quality"]),
                    orientation=data.get("orientation", "other"),
                    artifacts=dict(data.get("artifacts", {})),
                    comment=data.get("comment", ""),
                    duration_s=float(data.get("duration_s", 0.0)),
                    timestamp=data.get("timestamp", ""),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise CorruptRatings(f"{path}:{lineno}: {err}") from err
    return records


def latest_per_stack_rater(records: list[RatingRecord]) -> dict[tuple[str, str], RatingRecord]:
    """Latest rating per (stack, rater); timestamp ties resolve to the later line."""
    latest: dict[tuple[str, str], RatingRecord] = {}
    for rec in records:
        key = (rec.stack_id, rec.rater_id)
        if key not in latest or rec.timestamp >= latest[key].timestamp:
            latest[key] = rec
    return latest


def aggregate_ratings(
    ratings_path: str | Path,
    known_stack_ids: list[str],
    policy: str = "latest_per_rater",
    primary_rater: str | None = None,
):
    """Build the labels table and the paired-ratings table from the log.

    Returns ``(labels, paired, skipped)``: labels maps stack_id to the rating
    chosen by the policy; paired holds (stack_id, rating_a, rating_b) rows for
    the two most prolific raters; skipped lists log rows whose stack_id is
    unknown.  Re-running aggregation never mutates the log.
    """
    if policy not in ("latest_per_rater", "mean_across_raters"):
        raise ValueError(f"unknown policy {policy!r}")
    known = set(known_stack_ids)
    records = read_ratings(ratings_path)
    skipped = [r for r in records if r.stack_id not in known]
    records = [r for r in records if r.stack_id in known]
    latest = latest_per_stack_rater(records)

    per_rater: dict[str, dict[str, float]] = {}
    for (stack_id, rater_id), rec in latest.items():
        per_rater.setdefault(rater_id, {})[stack_id] = rec.quality

    labels: dict[str, float] = {}
    if per_rater:
        if policy == "latest_per_rater":
            if primary_rater is None:
                primary_rater = max(per_rater, key=lambda r: (len(per_rater[r]), r))
            if primary_rater not in per_rater:
                raise ValueError(f"no ratings by {primary_rater!r}")
            labels = dict(sorted(per_rater[primary_rater].items()))
        else:
            stacks = sorted({s for ratings in per_rater.values() for s in ratings})
            for stack_id in stacks:
                values = [r[stack_id] for r in per_rater.values() if stack_id in r]
                labels[stack_id] = sum(values) / len(values)

    paired: list[tuple[str, float, float]] = []
    if len(per_rater) >= 2:
        top_two = sorted(per_rater, key=lambda r: (-len(per_rater[r]), r))[:2]
        a, b = per_rater[top_two[0]], per_rater[top_two[1]]
        for stack_id in sorted(set(a) & set(b)):
            paired.append((stack_id, a[stack_id], b[stack_id]))
    return labels, paired, skipped


def write_labels_csv(labels: dict[str, float], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["stack_id,rating"]
    for stack_id, rating in labels.items():
        lines.append(f"{stack_id},{rating:.6g}")
    path.write_text("\n".join(lines) + "\n")
    return path
