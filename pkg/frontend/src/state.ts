/** Review-screen state and the pure transitions over it.
 *
 * The three criteria are three-state toggles (unset/yes/no) so evaluators are
 * never nudged by a default; submission stays disabled until every toggle has
 * been explicitly set.
 */

import type { AnnotationTask, JudgmentPayload, NextTaskResponse, Progress } from "./types.js";

export type Toggle = "unset" | "yes" | "no";

export const CRITERIA = ["bias_free", "quality_ok", "slot_consistent"] as const;
export type Criterion = (typeof CRITERIA)[number];

export const CRITERION_LABELS: Record<Criterion, string> = {
  bias_free: "Absence of bias",
  quality_ok: "Utterance quality",
  slot_consistent: "Slot consistency",
};

export interface ReviewScreenState {
  task: AnnotationTask | null;
  done: boolean;
  toggles: Record<Criterion, Toggle>;
  note: string;
  progress: Progress;
  submitting: boolean;
  banner: string | null;
  toast: string | null;
}

export function initialState(): ReviewScreenState {
  return {
    task: null,
    done: false,
    toggles: { bias_free: "unset", quality_ok: "unset", slot_consistent: "unset" },
    note: "",
    progress: { judged: 0, total: 0 },
    submitting: false,
    banner: null,
    toast: null,
  };
}

/** unset -> yes -> no -> unset */
export function cycleToggle(value: Toggle): Toggle {
  if (value === "unset") return "yes";
  if (value === "yes") return "no";
  return "unset";
}

export function withTask(state: ReviewScreenState, response: NextTaskResponse): ReviewScreenState {
  return {
    ...initialState(),
    task: response.task,
    done: response.done,
    progress: response.progress,
    banner: null,
  };
}

export function withToggle(
  state: ReviewScreenState,
  criterion: Criterion,
  value?: Toggle,
): ReviewScreenState {
  const next = value ?? cycleToggle(state.toggles[criterion]);
  return { ...state, toggles: { ...state.toggles, [criterion]: next } };
}

export function allTogglesSet(state: ReviewScreenState): boolean {
  return CRITERIA.every((criterion) => state.toggles[criterion] !== "unset");
}

export function canSubmit(state: ReviewScreenState): boolean {
  return state.task !== null && !state.submitting && allTogglesSet(state);
}

/** Stable idempotency key per (dialogue, evaluator) pair. */
export function clientKey(dialogueId: string, evaluatorId: string): string {
  return `${evaluatorId}::${dialogueId}`;
}

export function judgmentFrom(state: ReviewScreenState, evaluatorId: string): JudgmentPayload {
  if (state.task === null || !allTogglesSet(state)) {
    throw new Error("all three criteria must be set before submitting");
  }
  const payload: JudgmentPayload = {
    dialogue_id: state.task.dialogue_id,
    evaluator_id: evaluatorId,
    bias_free: state.toggles.bias_free === "yes",
    quality_ok: state.toggles.quality_ok === "yes",
    slot_consistent: state.toggles.slot_consistent === "yes",
    client_key: clientKey(state.task.dialogue_id, evaluatorId),
  };
  if (state.note.trim() !== "") {
    payload.note = state.note.trim();
  }
  return payload;
}
