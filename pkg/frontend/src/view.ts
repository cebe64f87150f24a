/** DOM rendering for the review screen.
 *
 * All dialogue content is inserted via textContent so the UI renders exactly
 * what the API returned, byte for byte, with no markup interpretation.
 */

import type { ReviewScreenState, Criterion, Toggle } from "./state.js";
import { CRITERIA, CRITERION_LABELS, canSubmit } from "./state.js";
import type { TaskTurn } from "./types.js";

export interface ViewHandlers {
  onToggle: (criterion: Criterion, value: Toggle) => void;
  onNote: (text: string) => void;
  onSubmit: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderTurn(turn: TaskTurn): HTMLElement {
  const item = el("li", "turn");
  item.dataset.index = String(turn.index);
  if (turn.agent !== "") {
    const agent = el("div", "line agent");
    agent.append(el("span", "speaker", "Agent"), el("span", "text", turn.agent));
    item.append(agent);
  }
  const user1 = el("div", "line user1");
  user1.append(el("span", "speaker", "User1"), el("span", "text", turn.user1));
  item.append(user1);
  if (turn.user2 !== null) {
    const user2 = el("div", "line user2 highlight");
    user2.append(
      el("span", "speaker", "User2"),
      el("span", "act-label", turn.user2.act),
      el("span", "text", turn.user2.text),
    );
    item.append(user2);
    const chips = el("div", "chips");
    for (const [slot, value] of Object.entries(turn.gold_cumulative)) {
      chips.append(el("span", "chip", `${slot}: ${value}`));
    }
    item.append(chips);
  }
  return item;
}

function renderToggles(state: ReviewScreenState, handlers: ViewHandlers): HTMLElement {
  const box = el("div", "criteria");
  CRITERIA.forEach((criterion, position) => {
    const row = el("div", "criterion");
    row.dataset.criterion = criterion;
    row.append(el("span", "label", `${position + 1}. ${CRITERION_LABELS[criterion]}`));
    for (const value of ["yes", "no"] as const) {
      const button = el("button", "toggle", value);
      button.dataset.value = value;
      if (state.toggles[criterion] === value) button.classList.add("selected");
      button.addEventListener("click", () => handlers.onToggle(criterion, value));
      row.append(button);
    }
    if (state.toggles[criterion] === "unset") row.classList.add("unset");
    box.append(row);
  });
  return box;
}

export function render(root: HTMLElement, state: ReviewScreenState, handlers: ViewHandlers): void {
  root.textContent = "";
  const screen = el("div", "screen");

  if (state.banner !== null) {
    screen.append(el("div", "banner", state.banner));
  }

  const progress = el(
    "div",
    "progress",
    `${state.progress.judged} / ${state.progress.total} judged`,
  );
  screen.append(progress);

  if (state.done) {
    const doneBox = el("div", "done");
    doneBox.append(el("p", undefined, "All sampled dialogues are judged. Thank you!"));
    const link = el("a", "summary-link", "View summary");
    link.href = "/api/summary";
    doneBox.append(link);
    screen.append(doneBox);
    root.append(screen);
    return;
  }

  if (state.task !== null) {
    screen.append(el("h2", "dialogue-id", state.task.dialogue_id));
    const turns = el("ol", "turns");
    for (const turn of state.task.turns) {
      turns.append(renderTurn(turn));
    }
    screen.append(turns);
    screen.append(renderToggles(state, handlers));

    const note = el("textarea", "note") as HTMLTextAreaElement;
    note.placeholder = "Optional note";
    note.value = state.note;
    note.addEventListener("input", () => handlers.onNote(note.value));
    screen.append(note);

    const submit = el("button", "submit", state.submitting ? "Submitting..." : "Submit (Enter)");
    submit.disabled = !canSubmit(state);
    submit.addEventListener("click", () => handlers.onSubmit());
    screen.append(submit);
    screen.append(el(
      "p", "hint", "Keys: 1/2/3 cycle the criteria, Enter submits.",
    ));
  }

  if (state.toast !== null) {
    screen.append(el("div", "toast", state.toast));
  }
  root.append(screen);
}
