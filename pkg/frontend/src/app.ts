/** Controller: wires the API client, screen state, and renderer together.
 *
 * One submission may be in flight at a time; the judgment carries an
 * idempotency key per (dialogue, evaluator) pair, so an accidental double
 * delivery still persists exactly once on the service side.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Criterion, ReviewScreenState, Toggle } from "./state.js";
import {
  CRITERIA,
  canSubmit,
  cycleToggle,
  initialState,
  judgmentFrom,
  withTask,
  withToggle,
} from "./state.js";
import { render, type ViewHandlers } from "./view.js";

export class AnnotationApp {
  state: ReviewScreenState = initialState();
  private readonly handlers: ViewHandlers;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly evaluatorId: string,
  ) {
    this.handlers = {
      onToggle: (criterion, value) => this.setToggle(criterion, value),
      onNote: (text) => this.setNote(text),
      onSubmit: () => {
        void this.submitAndAdvance();
      },
    };
  }

  private update(state: ReviewScreenState): void {
    this.state = state;
    render(this.root, this.state, this.handlers);
  }

  async start(): Promise<void> {
    await this.fetchNextTask();
  }

  async fetchNextTask(): Promise<void> {
    try {
      const response = await this.api.nextTask(this.evaluatorId);
      this.update(withTask(this.state, response));
    } catch (err) {
      const message =
        err instanceof ApiError && err.kind === "network"
          ? "Annotation service unreachable. It will retry when you reload."
          : `Could not fetch the next task: ${String(err)}`;
      this.update({ ...this.state, banner: message });
    }
  }

  setToggle(criterion: Criterion, value?: Toggle): void {
    if (this.state.task === null || this.state.submitting) return;
    this.update(withToggle(this.state, criterion, value));
  }

  setNote(text: string): void {
    this.state = { ...this.state, note: text };
  }

  handleKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLTextAreaElement) return;
    const position = ["1", "2", "3"].indexOf(event.key);
    if (position >= 0) {
      const criterion = CRITERIA[position];
      if (criterion !== undefined) {
        this.setToggle(criterion, cycleToggle(this.state.toggles[criterion]));
      }
      return;
    }
    if (event.key === "Enter") {
      void this.submitAndAdvance();
    }
  }

  async submitAndAdvance(): Promise<void> {
    if (this.state.submitting) return; // one in-flight submission at a time
    if (!canSubmit(this.state)) {
      this.update({ ...this.state, toast: "Set all three criteria before submitting." });
      return;
    }
    const snapshot = this.state;
    const payload = judgmentFrom(this.state, this.evaluatorId);
    this.update({ ...this.state, submitting: true, toast: null });
    try {
      await this.api.submitJudgment(payload);
    } catch (err) {
      // roll back to the judged screen with an error toast
      const message =
        err instanceof ApiError && err.kind === "network"
          ? "Network error while submitting; please retry."
          : `Submission rejected: ${err instanceof ApiError ? err.errorName ?? err.message : String(err)}`;
      this.update({ ...snapshot, submitting: false, toast: message });
      return;
    }
    await this.fetchNextTask();
  }
}
