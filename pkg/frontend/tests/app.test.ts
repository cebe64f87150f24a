import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnnotationApp } from "../src/app.js";
import { CRITERIA } from "../src/state.js";
import { FakeService, tenTaskFixture } from "./fake_service.js";

function makeApp(service: FakeService, evaluator = "alice") {
  const root = document.createElement("div");
  document.body.append(root);
  const app = new AnnotationApp(root, new ApiClient("http://fake", service.fetch), evaluator);
  return { app, root };
}

function setAllToggles(app: AnnotationApp, quality = true) {
  app.setToggle("bias_free", "yes");
  app.setToggle("quality_ok", quality ? "yes" : "no");
  app.setToggle("slot_consistent", "yes");
}

let service: FakeService;

beforeEach(() => {
  document.body.innerHTML = "";
  service = new FakeService(tenTaskFixture());
});

describe("task flow", () => {
  it("fetches the ten sampled tasks in order as judgments land", async () => {
    const { app } = makeApp(service);
    await app.start();
    const seen: string[] = [];
    for (let round = 0; round < 10; round += 1) {
      expect(app.state.task).not.toBeNull();
      seen.push(app.state.task!.dialogue_id);
      setAllToggles(app);
      await app.submitAndAdvance();
    }
    expect(seen).toEqual(service.tasks.map((task) => task.dialogue_id));
    expect(app.state.done).toBe(true);
    expect(app.state.progress).toEqual({ judged: 10, total: 10 });
  });

  it("renders the fetched dialogue into the screen", async () => {
    const { app, root } = makeApp(service);
    await app.start();
    expect(root.querySelector(".dialogue-id")?.textContent).toBe("DLG00");
    expect(root.querySelectorAll(".line.user2.highlight").length).toBe(1);
  });
});

describe("submission gating", () => {
  it("blocks submission until all three toggles are set, with a toast", async () => {
    const { app, root } = makeApp(service);
    await app.start();
    app.setToggle("bias_free", "yes");
    await app.submitAndAdvance();
    expect(service.journal.length).toBe(0);
    expect(app.state.task?.dialogue_id).toBe("DLG00"); // did not advance
    expect(root.querySelector(".toast")?.textContent).toContain("all three criteria");
    const posts = service.requests.filter((r) => r.method === "POST");
    expect(posts.length).toBe(0);
  });

  it("persists judgments that summarize to hand-computed ratios (5/6 quality)", async () => {
    const { app } = makeApp(service);
    await app.start();
    // judge six dialogues; exactly one gets a negative quality vote
    for (let round = 0; round < 6; round += 1) {
      setAllToggles(app, round !== 2);
      await app.submitAndAdvance();
    }
    const summary = await new ApiClient("http://fake", service.fetch).summary();
    expect(summary.judgment_count).toBe(6);
    expect(summary.ratios["quality_ok"]).toBeCloseTo(5 / 6, 12);
    expect(summary.ratios["bias_free"]).toBe(1.0);
    expect(summary.coverage).toBeCloseTo(6 / 10, 12);
  });

  it("survives a double submit with exactly one journal entry", async () => {
    const { app } = makeApp(service);
    await app.start();
    setAllToggles(app);
    // second click lands while the first request is still in flight
    const first = app.submitAndAdvance();
    const second = app.submitAndAdvance();
    await Promise.all([first, second]);
    expect(service.journal.length).toBe(1);
    expect(service.journal[0]?.dialogue_id).toBe("DLG00");
  });

  it("idempotency key dedups even a straight re-delivery", async () => {
    const { app } = makeApp(service);
    await app.start();
    setAllToggles(app);
    await app.submitAndAdvance();
    // simulate the same judgment arriving again (e.g. a retried request)
    const repeat = service.journal[0]!;
    const client = new ApiClient("http://fake", service.fetch);
    await client.submitJudgment(repeat);
    expect(service.journal.length).toBe(1);
  });
});

describe("failure handling", () => {
  it("rolls back with a toast when the service rejects the judgment", async () => {
    const { app, root } = makeApp(service);
    await app.start();
    setAllToggles(app);
    app.state.task!.dialogue_id = "UNSAMPLED"; // force an UnknownDialogue rejection
    await app.submitAndAdvance();
    expect(app.state.task?.dialogue_id).toBe("UNSAMPLED"); // still on the same screen
    expect(app.state.submitting).toBe(false);
    expect(app.state.toggles.bias_free).toBe("yes"); // selections preserved
    expect(root.querySelector(".toast")?.textContent).toContain("UnknownDialogue");
    expect(service.journal.length).toBe(0);
  });

  it("shows a retry toast on network failure during submit", async () => {
    const { app, root } = makeApp(service);
    await app.start();
    setAllToggles(app);
    service.failNetwork = true;
    await app.submitAndAdvance();
    expect(root.querySelector(".toast")?.textContent).toContain("retry");
    expect(app.state.task?.dialogue_id).toBe("DLG00");
  });

  it("shows the unreachable banner when the first fetch fails", async () => {
    service.failNetwork = true;
    const { app, root } = makeApp(service);
    await app.start();
    expect(root.querySelector(".banner")?.textContent).toContain("unreachable");
    expect(app.state.task).toBeNull();
  });
});

describe("keyboard shortcuts", () => {
  function key(app: AnnotationApp, value: string) {
    app.handleKey(new KeyboardEvent("keydown", { key: value }));
  }

  it("1/2/3 cycle the criteria toggles", async () => {
    const { app } = makeApp(service);
    await app.start();
    key(app, "1");
    expect(app.state.toggles.bias_free).toBe("yes");
    key(app, "1");
    expect(app.state.toggles.bias_free).toBe("no");
    key(app, "2");
    key(app, "3");
    expect(app.state.toggles.quality_ok).toBe("yes");
    expect(app.state.toggles.slot_consistent).toBe("yes");
  });

  it("Enter submits once everything is set", async () => {
    const { app } = makeApp(service);
    await app.start();
    key(app, "1");
    key(app, "2");
    key(app, "3");
    key(app, "Enter");
    await Promise.resolve();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(service.journal.length).toBe(1);
    expect(app.state.task?.dialogue_id).toBe("DLG01");
  });

  it("keys are ignored while typing a note", async () => {
    const { app } = makeApp(service);
    await app.start();
    const textarea = document.createElement("textarea");
    const event = new KeyboardEvent("keydown", { key: "1" });
    Object.defineProperty(event, "target", { value: textarea });
    app.handleKey(event);
    expect(app.state.toggles.bias_free).toBe("unset");
  });
});

describe("round trip", () => {
  it("a submitted judgment reads back exactly as entered", async () => {
    const { app } = makeApp(service);
    await app.start();
    app.setToggle("bias_free", "yes");
    app.setToggle("quality_ok", "no");
    app.setToggle("slot_consistent", "yes");
    app.setNote("tone is slightly off");
    await app.submitAndAdvance();
    const stored = service.journal[0];
    expect(stored).toMatchObject({
      dialogue_id: "DLG00",
      evaluator_id: "alice",
      bias_free: true,
      quality_ok: false,
      slot_consistent: true,
      note: "tone is slightly off",
    });
  });
});
