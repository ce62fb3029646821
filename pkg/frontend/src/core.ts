// Pure widget logic: draft state, wire payloads, validation and navigation.
// Everything here is DOM-free and network-free so it can be unit-tested
// headlessly; widget.ts wires it to the page and the rating service.

export const ORIENTATIONS = ["axial", "coronal", "sagittal", "other"] as const;
export const ARTIFACT_KEYS = [
  "motion_inplane",
  "motion_throughplane",
  "bias",
  "noise",
  "fov_incomplete",
] as const;
export const GRADINGS = ["none", "mild", "moderate", "severe"] as const;

export type Orientation = (typeof ORIENTATIONS)[number];
export type ArtifactKey = (typeof ARTIFACT_KEYS)[number];
export type Grading = (typeof GRADINGS)[number];

export interface StackEntry {
  stack_id: string;
  subject_id: string;
  scanner_id: string;
  site_id: string;
  split: string;
  report: string;
  rated: boolean;
}

export interface Draft {
  quality: number | null;
  orientation: Orientation;
  artifacts: Record<string, Grading>;
  comment: string;
}

// exactly the JSON body POSTed to /api/ratings (timestamp is server-stamped)
export interface RatingPayload {
  stack_id: string;
  rater_id: string;
  quality: number;
  orientation: Orientation;
  artifacts: Record<string, Grading>;
  comment: string;
  duration_s: number;
}

export interface WireRating extends RatingPayload {
  timestamp: string;
}

export function emptyDraft(): Draft {
  return { quality: null, orientation: "other", artifacts: {}, comment: "" };
}

export function canSubmit(draft: Draft): boolean {
  return draft.quality !== null && draft.quality >= 0 && draft.quality <= 4;
}

// mirrors the service-side checks so problems surface before the POST
export function validateDraft(draft: Draft): string[] {
  const problems: string[] = [];
  if (draft.quality === null) {
    problems.push("quality is not set");
  } else if (!(draft.quality >= 0 && draft.quality <= 4)) {
    problems.push("quality must be within [0, 4]");
  }
  if (!(ORIENTATIONS as readonly string[]).includes(draft.orientation)) {
    problems.push(`orientation must be one of ${ORIENTATIONS.join(", ")}`);
  }
  for (const [key, grading] of Object.entries(draft.artifacts)) {
    if (!(ARTIFACT_KEYS as readonly string[]).includes(key)) {
      problems.push(`unknown artifact ${key}`);
    } else if (!(GRADINGS as readonly string[]).includes(grading)) {
      problems.push(`artifact ${key}: grading must be one of ${GRADINGS.join(", ")}`);
    }
  }
  return problems;
}

export function elapsedSeconds(startMs: number, nowMs: number): number {
  return Math.max(0, Math.round((nowMs - startMs) / 100) / 10);
}

export function buildPayload(
  stackId: string,
  raterId: string,
  draft: Draft,
  startMs: number,
  nowMs: number,
): RatingPayload {
  if (!canSubmit(draft)) {
    throw new Error("draft is not submittable: quality not set");
  }
  return {
    stack_id: stackId,
    rater_id: raterId,
    quality: draft.quality as number,
    orientation: draft.orientation,
    artifacts: { ...draft.artifacts },
    comment: draft.comment,
    duration_s: elapsedSeconds(startMs, nowMs),
  };
}

export type Direction = "next" | "prev" | "next_unrated";

// navigation follows manifest order (the order /api/stacks returns)
export function navigate(
  stacks: StackEntry[],
  currentId: string,
  direction: Direction,
): StackEntry | null {
  const index = stacks.findIndex((entry) => entry.stack_id === currentId);
  if (index < 0) {
    return stacks.length ? stacks[0] : null;
  }
  if (direction === "prev") {
    return index > 0 ? stacks[index - 1] : null;
  }
  if (direction === "next") {
    return index + 1 < stacks.length ? stacks[index + 1] : null;
  }
  for (let step = 1; step <= stacks.length; step += 1) {
    const candidate = stacks[(index + step) % stacks.length];
    if (!candidate.rated && candidate.stack_id !== currentId) {
      return candidate;
    }
  }
  return null;
}

// latest prior rating by this rater, for prefilling the controls
export function prefill(records: WireRating[], stackId: string, raterId: string): Draft | null {
  let latest: WireRating | null = null;
  for (const record of records) {
    if (record.stack_id !== stackId || record.rater_id !== raterId) {
      continue;
    }
    if (latest === null || record.timestamp >= latest.timestamp) {
      latest = record;
    }
  }
  if (latest === null) {
    return null;
  }
  return {
    quality: latest.quality,
    orientation: latest.orientation,
    artifacts: { ...latest.artifacts },
    comment: latest.comment,
  };
}

export function reportUrl(entry: StackEntry, raterId: string): string {
  const base = `../${entry.report}`;
  return raterId ? `${base}?rater=${encodeURIComponent(raterId)}` : base;
}

export function raterFromQuery(search: string): string {
  const match = /[?&]rater=([^&]*)/.exec(search);
  return match ? decodeURIComponent(match[1]) : "rater1";
}
