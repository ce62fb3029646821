// DOM and network wiring for the rating widget.  The widget mounts into the
// #rating-widget placeholder each report carries, talks to the local rating
// service, and degrades to a download-JSON mode when the service is absent
// (reports opened straight from disk).

import {
  ARTIFACT_KEYS,
  Draft,
  GRADINGS,
  ORIENTATIONS,
  StackEntry,
  WireRating,
  buildPayload,
  canSubmit,
  emptyDraft,
  navigate,
  prefill,
  raterFromQuery,
  reportUrl,
  validateDraft,
} from "./core";

interface WidgetState {
  stackId: string;
  raterId: string;
  stacks: StackEntry[];
  draft: Draft;
  startMs: number;
  online: boolean;
  submitting: boolean;
}

const state: WidgetState = {
  stackId: "",
  raterId: "rater1",
  stacks: [],
  draft: emptyDraft(),
  startMs: Date.now(),
  online: true,
  submitting: false,
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

function setStatus(message: string, kind: "info" | "error" | "ok" = "info"): void {
  const status = document.getElementById("widget-status");
  if (status) {
    status.textContent = message;
    status.className = `status-${kind}`;
  }
}

function refreshSubmitGate(): void {
  const button = document.getElementById("widget-submit") as HTMLButtonElement | null;
  if (button) {
    button.disabled = !canSubmit(state.draft) || state.submitting;
  }
  const label = document.getElementById("quality-value");
  if (label) {
    label.textContent = state.draft.quality === null ? "not set" : state.draft.quality.toFixed(2);
  }
}

function renderControls(mount: HTMLElement): void {
  mount.textContent = "";
  const form = el("div", { class: "widget-form" });

  const raterRow = el("div", { class: "row" });
  raterRow.appendChild(el("label", { for: "rater-id" }, "rater "));
  const raterInput = el("input", { id: "rater-id", type: "text", value: state.raterId });
  raterInput.addEventListener("change", () => {
    state.raterId = raterInput.value || "rater1";
  });
  raterRow.appendChild(raterInput);
  form.appendChild(raterRow);

  // artifact gradings come before the overall score on purpose: rate the
  // artifacts first, then decide on the score
  const artifacts = el("fieldset", { class: "artifacts" });
  artifacts.appendChild(el("legend", {}, "artifacts"));
  for (const key of ARTIFACT_KEYS) {
    const row = el("div", { class: "row" });
    row.appendChild(el("label", { for: `artifact-${key}` }, key.replace(/_/g, " ") + " "));
    const select = el("select", { id: `artifact-${key}` });
    for (const grading of GRADINGS) {
      select.appendChild(el("option", { value: grading }, grading));
    }
    select.addEventListener("change", () => {
      state.draft.artifacts[key] = select.value as Draft["artifacts"][string];
    });
    row.appendChild(select);
    artifacts.appendChild(row);
  }
  form.appendChild(artifacts);

  const orientationRow = el("div", { class: "row" });
  orientationRow.appendChild(el("label", { for: "orientation" }, "in-plane orientation "));
  const orientation = el("select", { id: "orientation" });
  for (const option of ORIENTATIONS) {
    orientation.appendChild(el("option", { value: option }, option));
  }
  orientation.value = state.draft.orientation;
  orientation.addEventListener("change", () => {
    state.draft.orientation = orientation.value as Draft["orientation"];
  });
  orientationRow.appendChild(orientation);
  form.appendChild(orientationRow);

  const qualityRow = el("div", { class: "row" });
  qualityRow.appendChild(el("label", { for: "quality" }, "overall quality [0-4] "));
  const slider = el("input", {
    id: "quality",
    type: "range",
    min: "0",
    max: "4",
    step: "0.05",
    value: "2",
  });
  slider.addEventListener("input", () => {
    state.draft.quality = Number(slider.value);
    refreshSubmitGate();
  });
  qualityRow.appendChild(slider);
  qualityRow.appendChild(el("span", { id: "quality-value" }, "not set"));
  form.appendChild(qualityRow);

  const commentRow = el("div", { class: "row" });
  commentRow.appendChild(el("label", { for: "comment" }, "comment "));
  const comment = el("input", { id: "comment", type: "text", value: "" });
  comment.addEventListener("change", () => {
    state.draft.comment = comment.value;
  });
  commentRow.appendChild(comment);
  form.appendChild(commentRow);

  const buttons = el("div", { class: "row buttons" });
  const prev = el("button", { id: "widget-prev", type: "button" }, "< prev");
  const submit = el("button", { id: "widget-submit", type: "button" }, "submit rating");
  const next = el("button", { id: "widget-next", type: "button" }, "next >");
  const nextUnrated = el("button", { id: "widget-next-unrated", type: "button" }, "next unrated (n)");
  prev.addEventListener("click", () => go("prev"));
  next.addEventListener("click", () => go("next"));
  nextUnrated.addEventListener("click", () => go("next_unrated"));
  submit.addEventListener("click", () => void submitDraft());
  for (const b of [prev, submit, next, nextUnrated]) {
    buttons.appendChild(b);
  }
  form.appendChild(buttons);
  form.appendChild(el("div", { id: "widget-status" }));
  mount.appendChild(form);
  refreshSubmitGate();
}

function applyDraftToControls(): void {
  const slider = document.getElementById("quality") as HTMLInputElement | null;
  if (slider && state.draft.quality !== null) {
    slider.value = String(state.draft.quality);
  }
  const orientation = document.getElementById("orientation") as HTMLSelectElement | null;
  if (orientation) {
    orientation.value = state.draft.orientation;
  }
  for (const key of ARTIFACT_KEYS) {
    const select = document.getElementById(`artifact-${key}`) as HTMLSelectElement | null;
    if (select && state.draft.artifacts[key]) {
      select.value = state.draft.artifacts[key];
    }
  }
  const comment = document.getElementById("comment") as HTMLInputElement | null;
  if (comment) {
    comment.value = state.draft.comment;
  }
  refreshSubmitGate();
}

function go(direction: "next" | "prev" | "next_unrated"): void {
  const target = navigate(state.stacks, state.stackId, direction);
  if (!target) {
    setStatus(direction === "prev" ? "already at the first stack" : "no further stack", "info");
    return;
  }
  window.location.href = reportUrl(target, state.raterId);
}

function offlineDownload(): void {
  const problems = validateDraft(state.draft);
  if (problems.length) {
    setStatus(problems.join("; "), "error");
    return;
  }
  const payload = buildPayload(state.stackId, state.raterId, state.draft, state.startMs, Date.now());
  const blob = new Blob([JSON.stringify(payload, null, 1)], { type: "application/json" });
  const link = el("a", {
    href: URL.createObjectURL(blob),
    download: `rating_${state.stackId}_${state.raterId}.json`,
  });
  document.body.appendChild(link);
  link.click();
  link.remove();
  setStatus("offline mode: rating downloaded as JSON", "ok");
}

async function submitDraft(): Promise<void> {
  const problems = validateDraft(state.draft);
  if (problems.length) {
    setStatus(problems.join("; "), "error");
    return;
  }
  if (!state.online) {
    offlineDownload();
    return;
  }
  const payload = buildPayload(state.stackId, state.raterId, state.draft, state.startMs, Date.now());
  state.submitting = true;
  refreshSubmitGate();
  try {
    const response = await fetch("/api/ratings", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (response.status === 201) {
      setStatus("stored - moving to the next unrated stack", "ok");
      state.stacks = state.stacks.map((entry) =>
        entry.stack_id === state.stackId ? { ...entry, rated: true } : entry,
      );
      const target = navigate(state.stacks, state.stackId, "next_unrated");
      if (target) {
        window.location.href = reportUrl(target, state.raterId);
      } else {
        setStatus("stored - all stacks rated", "ok");
      }
    } else if (response.status === 422) {
      const body = (await response.json()) as { errors?: string[] };
      setStatus(`rejected: ${(body.errors ?? ["validation error"]).join("; ")}`, "error");
    } else {
      setStatus(`unexpected response ${response.status}; draft kept - retry`, "error");
    }
  } catch {
    setStatus("network failure; draft kept - retry or use offline download", "error");
    state.online = false;
  } finally {
    state.submitting = false;
    refreshSubmitGate();
  }
}

function bindKeyboard(): void {
  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) {
      return;
    }
    if (event.key === "ArrowRight") {
      go("next");
    } else if (event.key === "ArrowLeft") {
      go("prev");
    } else if (event.key === "n") {
      go("next_unrated");
    }
  });
}

async function init(): Promise<void> {
  const mount = document.getElementById("rating-widget");
  if (!mount) {
    return;
  }
  state.stackId = mount.getAttribute("data-stack-id") ?? document.body.getAttribute("data-stack-id") ?? "";
  state.raterId = raterFromQuery(window.location.search);
  state.startMs = Date.now();
  renderControls(mount);
  try {
    const stacksResponse = await fetch(`/api/stacks?rater=${encodeURIComponent(state.raterId)}`);
    state.stacks = (await stacksResponse.json()) as StackEntry[];
    const ratingsResponse = await fetch(`/api/ratings?rater=${encodeURIComponent(state.raterId)}`);
    const records = (await ratingsResponse.json()) as WireRating[];
    const previous = prefill(records, state.stackId, state.raterId);
    if (previous) {
      state.draft = previous;
      applyDraftToControls();
      setStatus("previously rated - fields prefilled, resubmitting overwrites", "info");
    }
  } catch {
    state.online = false;
    setStatus("rating service unreachable - offline mode (submissions download as JSON)", "error");
  }
  bindKeyboard();
}

void init();
