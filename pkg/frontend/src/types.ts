/** Wire types mirroring the annotation service's JSON API. */

export type SpeechActLabel =
  | "constatives"
  | "directives"
  | "commissives"
  | "acknowledgments";

export interface TaskTurn {
  index: number;
  agent: string;
  user1: string;
  user2: { text: string; act: SpeechActLabel } | null;
  gold_delta: Record<string, string>;
  gold_cumulative: Record<string, string>;
}

export interface AnnotationTask {
  dialogue_id: string;
  sample_seed: number;
  turns: TaskTurn[];
  assigned_evaluators: string[];
}

export interface Progress {
  judged: number;
  total: number;
}

export interface NextTaskResponse {
  done: boolean;
  task: AnnotationTask | null;
  progress: Progress;
}

export interface JudgmentPayload {
  dialogue_id: string;
  evaluator_id: string;
  bias_free: boolean;
  quality_ok: boolean;
  slot_consistent: boolean;
  note?: string;
  client_key?: string;
}

export interface SummaryResponse {
  ratios: Record<string, number | null>;
  consensus: Record<string, number | null>;
  judgment_count: number;
  judged_dialogues: number;
  sampled_dialogues: number;
  coverage: number;
  evaluators: string[];
}
