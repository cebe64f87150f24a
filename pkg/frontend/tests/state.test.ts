import { describe, expect, it } from "vitest";

import {
  CRITERIA,
  allTogglesSet,
  canSubmit,
  clientKey,
  cycleToggle,
  initialState,
  judgmentFrom,
  withTask,
  withToggle,
} from "../src/state.js";
import { makeTask } from "./fake_service.js";

function stateWithTask() {
  return withTask(initialState(), {
    done: false,
    task: makeTask("D1", [{ user1: "hello" }]),
    progress: { judged: 0, total: 10 },
  });
}

describe("toggle cycling", () => {
  it("cycles unset -> yes -> no -> unset", () => {
    expect(cycleToggle("unset")).toBe("yes");
    expect(cycleToggle("yes")).toBe("no");
    expect(cycleToggle("no")).toBe("unset");
  });

  it("all toggles default to unset", () => {
    const state = stateWithTask();
    for (const criterion of CRITERIA) {
      expect(state.toggles[criterion]).toBe("unset");
    }
    expect(allTogglesSet(state)).toBe(false);
  });
});

describe("submit gating", () => {
  it("blocks until every toggle is explicitly set", () => {
    let state = stateWithTask();
    expect(canSubmit(state)).toBe(false);
    state = withToggle(state, "bias_free", "yes");
    expect(canSubmit(state)).toBe(false);
    state = withToggle(state, "quality_ok", "no");
    expect(canSubmit(state)).toBe(false);
    state = withToggle(state, "slot_consistent", "yes");
    expect(canSubmit(state)).toBe(true);
  });

  it("a toggle cycled back to unset blocks again", () => {
    let state = stateWithTask();
    for (const criterion of CRITERIA) state = withToggle(state, criterion, "yes");
    expect(canSubmit(state)).toBe(true);
    state = withToggle(state, "quality_ok", "unset");
    expect(canSubmit(state)).toBe(false);
  });

  it("blocks without a task and while submitting", () => {
    let state = initialState();
    for (const criterion of CRITERIA) state = withToggle(state, criterion, "yes");
    expect(canSubmit(state)).toBe(false);
    let withOne = stateWithTask();
    for (const criterion of CRITERIA) withOne = withToggle(withOne, criterion, "yes");
    expect(canSubmit({ ...withOne, submitting: true })).toBe(false);
  });
});

describe("judgment construction", () => {
  it("maps toggles to booleans and carries the idempotency key", () => {
    let state = stateWithTask();
    state = withToggle(state, "bias_free", "yes");
    state = withToggle(state, "quality_ok", "no");
    state = withToggle(state, "slot_consistent", "yes");
    state = { ...state, note: "  minor phrasing wobble  " };
    const payload = judgmentFrom(state, "alice");
    expect(payload).toEqual({
      dialogue_id: "D1",
      evaluator_id: "alice",
      bias_free: true,
      quality_ok: false,
      slot_consistent: true,
      note: "minor phrasing wobble",
      client_key: clientKey("D1", "alice"),
    });
  });

  it("throws when a toggle is unset", () => {
    const state = withToggle(stateWithTask(), "bias_free", "yes");
    expect(() => judgmentFrom(state, "alice")).toThrow(/three criteria/);
  });

  it("omits an empty note", () => {
    let state = stateWithTask();
    for (const criterion of CRITERIA) state = withToggle(state, criterion, "yes");
    expect("note" in judgmentFrom(state, "alice")).toBe(false);
  });
});

describe("task transitions", () => {
  it("a new task resets toggles and note", () => {
    let state = stateWithTask();
    for (const criterion of CRITERIA) state = withToggle(state, criterion, "yes");
    state = { ...state, note: "old note" };
    const next = withTask(state, {
      done: false,
      task: makeTask("D2", [{ user1: "next" }]),
      progress: { judged: 1, total: 10 },
    });
    expect(next.task?.dialogue_id).toBe("D2");
    expect(allTogglesSet(next)).toBe(false);
    expect(next.note).toBe("");
    expect(next.progress).toEqual({ judged: 1, total: 10 });
  });
});
