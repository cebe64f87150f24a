"""Human-evaluation service: sample a fraction of dialogues, serve them to
evaluators, persist three-criteria judgments, and summarize ratios.

State lives in an append-only JSONL journal plus an in-memory latest-wins
index; replaying the journal reconstructs the exact materialized state.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from pydantic import BaseModel

from .errors import UnknownDialogue, UnknownEvaluator
from .model import Dialogue

CRITERIA = ("bias_free", "quality_ok", "slot_consistent")


class JudgmentBody(BaseModel):
    """POST /api/judgments request body."""

    dialogue_id: str
    evaluator_id: str
    bias_free: bool
    quality_ok: bool
    slot_consistent: bool
    note: Optional[str] = None
    client_key: Optional[str] = None


@dataclass(frozen=True)
class AnnotationTask:
    dialogue_id: str
    sample_seed: int
    turns: tuple[dict, ...]
    assigned_evaluators: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "sample_seed": self.sample_seed,
            "turns": list(self.turns),
            "assigned_evaluators": list(self.assigned_evaluators),
        }


@dataclass(frozen=True)
class Judgment:
    dialogue_id: str
    evaluator_id: str
    bias_free: bool
    quality_ok: bool
    slot_consistent: bool
    note: Optional[str] = None
    submitted_at: Optional[str] = None
    client_key: Optional[str] = None

    def to_json(self) -> dict:
        payload = {
            "dialogue_id": self.dialogue_id,
            "evaluator_id": self.evaluator_id,
            "bias_free": self.bias_free,
            "quality_ok": self.quality_ok,
            "slot_consistent": self.slot_consistent,
            "submitted_at": self.submitted_at,
        }
        if self.note is not None:
            payload["note"] = self.note
        if self.client_key is not None:
            payload["client_key"] = self.client_key
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> "Judgment":
        return cls(
            dialogue_id=payload["dialogue_id"],
            evaluator_id=payload["evaluator_id"],
            bias_free=bool(payload["bias_free"]),
            quality_ok=bool(payload["quality_ok"]),
            slot_consistent=bool(payload["slot_consistent"]),
            note=payload.get("note"),
            submitted_at=payload.get("submitted_at"),
            client_key=payload.get("client_key"),
        )


def _task_turns(dialogue: Dialogue) -> tuple[dict, ...]:
    """Turn payloads for review: user2 carries its act so the UI can highlight it."""
    turns = []
    for turn in dialogue.turns:
        turns.append({
            "index": turn.index,
            "agent": turn.agent,
            "user1": turn.user1,
            "user2": (
                {"text": turn.user2.text, "act": turn.user2.act.value}
                if turn.user2 and turn.user2.text else None
            ),
            "gold_delta": turn.gold_delta.to_flat(),
            "gold_cumulative": turn.gold_cumulative.to_flat(),
        })
    return tuple(turns)


def sample_tasks(dialogues: Sequence[Dialogue], fraction: float, seed: int) -> list[AnnotationTask]:
    """Deterministic seeded sample of ceil(fraction * N) dialogues.

    Stratified proportionally by domain combination (largest-remainder
    allocation), sampling without replacement inside each stratum.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    target = math.ceil(fraction * len(dialogues))
    strata: dict[tuple[str, ...], list[Dialogue]] = {}
    for dialogue in sorted(dialogues, key=lambda d: d.id):
        strata.setdefault(tuple(sorted(dialogue.domains)), []).append(dialogue)

    quotas: dict[tuple[str, ...], int] = {}
    remainders: list[tuple[float, tuple[str, ...]]] = []
    for key in sorted(strata):
        exact = fraction * len(strata[key])
        quotas[key] = math.floor(exact)
        remainders.append((exact - quotas[key], key))
    shortfall = target - sum(quotas.values())
    # hand out remaining picks by largest fractional part, then by stratum order
    remainders.sort(key=lambda item: (-item[0], item[1]))
    for _, key in remainders:
        if shortfall <= 0:
            break
        if quotas[key] < len(strata[key]):
            quotas[key] += 1
            shortfall -= 1
    # spill anything left into strata with spare capacity
    for key in sorted(strata):
        while shortfall > 0 and quotas[key] < len(strata[key]):
            quotas[key] += 1
            shortfall -= 1

    rng = random.Random(seed)
    chosen: list[Dialogue] = []
    for key in sorted(strata):
        members = strata[key]
        quota = min(quotas[key], len(members))
        chosen.extend(rng.sample(members, quota))
    chosen.sort(key=lambda d: d.id)
    return [
        AnnotationTask(dialogue_id=d.id, sample_seed=seed, turns=_task_turns(d))
        for d in chosen
    ]


def _utcnow() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class AnnotationStore:
    """Sampled tasks plus the judgment journal; safe for concurrent submissions."""

    def __init__(
        self,
        dialogues: Sequence[Dialogue],
        fraction: float,
        seed: int,
        journal_path: Path | str,
    ):
        self.tasks = sample_tasks(dialogues, fraction, seed)
        self._task_by_id = {task.dialogue_id: task for task in self.tasks}
        self.journal_path = Path(journal_path)
        self._lock = threading.Lock()
        self._latest: dict[tuple[str, str], Judgment] = {}
        self._evaluators: set[str] = set()
        if self.journal_path.exists():
            with open(self.journal_path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    judgment = Judgment.from_json(json.loads(line))
                    self._latest[(judgment.dialogue_id, judgment.evaluator_id)] = judgment
                    self._evaluators.add(judgment.evaluator_id)

    @property
    def sampled_ids(self) -> list[str]:
        return [task.dialogue_id for task in self.tasks]

    def register(self, evaluator_id: str) -> None:
        if not evaluator_id:
            raise UnknownEvaluator("evaluator id must be non-empty")
        with self._lock:
            self._evaluators.add(evaluator_id)

    def task(self, dialogue_id: str) -> AnnotationTask:
        task = self._task_by_id.get(dialogue_id)
        if task is None:
            raise UnknownDialogue(f"dialogue {dialogue_id!r} is not in the sampled set")
        return task

    def next_task(self, evaluator_id: str) -> Optional[AnnotationTask]:
        """First sampled dialogue the evaluator has not judged yet, in sample order."""
        self.register(evaluator_id)
        with self._lock:
            for task in self.tasks:
                if (task.dialogue_id, evaluator_id) not in self._latest:
                    return task
        return None

    def progress(self, evaluator_id: str) -> dict:
        with self._lock:
            judged = sum(
                1 for task in self.tasks if (task.dialogue_id, evaluator_id) in self._latest
            )
        return {"judged": judged, "total": len(self.tasks)}

    def submit(self, judgment: Judgment) -> Judgment:
        """Persist a judgment append-only; resubmission overwrites on materialization.

        A repeated ``client_key`` for the same (dialogue, evaluator) is a
        duplicate delivery and is dropped without a journal entry.
        """
        if judgment.dialogue_id not in self._task_by_id:
            raise UnknownDialogue(f"dialogue {judgment.dialogue_id!r} is not in the sampled set")
        if judgment.evaluator_id not in self._evaluators:
            raise UnknownEvaluator(f"evaluator {judgment.evaluator_id!r} never fetched a task")
        key = (judgment.dialogue_id, judgment.evaluator_id)
        if judgment.submitted_at is None:
            judgment = Judgment(**{**judgment.__dict__, "submitted_at": _utcnow()})
        with self._lock:
            previous = self._latest.get(key)
            if (previous is not None and judgment.client_key is not None
                    and previous.client_key == judgment.client_key):
                return previous
            self._latest[key] = judgment
            with open(self.journal_path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(judgment.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
                handle.flush()
        return judgment

    def judgments(self) -> list[Judgment]:
        """Materialized latest-wins judgments, sorted by (dialogue, evaluator)."""
        with self._lock:
            return [self._latest[key] for key in sorted(self._latest)]

    def slot_consistency_pairs(self) -> list[tuple[str, bool]]:
        return [(j.dialogue_id, j.slot_consistent) for j in self.judgments()]

    def summarize(self) -> dict:
        """Per-criterion positive ratios over judgments (primary denomination),
        per-dialogue consensus ratios, and coverage."""
        judgments = self.judgments()
        total = len(judgments)
        ratios: dict[str, Optional[float]] = {}
        for criterion in CRITERIA:
            positives = sum(1 for j in judgments if getattr(j, criterion))
            ratios[criterion] = positives / total if total else None
        by_dialogue: dict[str, list[Judgment]] = {}
        for judgment in judgments:
            by_dialogue.setdefault(judgment.dialogue_id, []).append(judgment)
        consensus: dict[str, Optional[float]] = {}
        for criterion in CRITERIA:
            if by_dialogue:
                agreed = sum(
                    1 for group in by_dialogue.values()
                    if all(getattr(j, criterion) for j in group)
                )
                consensus[criterion] = agreed / len(by_dialogue)
            else:
                consensus[criterion] = None
        return {
            "ratios": ratios,
            "consensus": consensus,
            "judgment_count": total,
            "judged_dialogues": len(by_dialogue),
            "sampled_dialogues": len(self.tasks),
            "coverage": len(by_dialogue) / len(self.tasks) if self.tasks else 0.0,
            "evaluators": sorted(self._evaluators),
        }

    def export(self, path: Path | str) -> int:
        judgments = self.judgments()
        with open(path, "w", encoding="utf-8") as handle:
            for judgment in judgments:
                handle.write(json.dumps(judgment.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
        return len(judgments)


def create_app(store: AnnotationStore, ui_dir: Optional[Path | str] = None):
    """FastAPI app over a store; optionally serves a built UI bundle at /."""
    from fastapi import FastAPI, Query
    from fastapi.responses import JSONResponse

    app = FastAPI(title="duetwoz annotation service")

    @app.exception_handler(UnknownDialogue)
    async def _unknown_dialogue(request, exc):
        return JSONResponse(status_code=404, content={"error": "UnknownDialogue", "detail": str(exc)})

    @app.exception_handler(UnknownEvaluator)
    async def _unknown_evaluator(request, exc):
        return JSONResponse(status_code=403, content={"error": "UnknownEvaluator", "detail": str(exc)})

    @app.get("/api/tasks")
    def get_next_task(evaluator: str = Query(..., min_length=1)):
        task = store.next_task(evaluator)
        progress = store.progress(evaluator)
        if task is None:
            return {"done": True, "task": None, "progress": progress}
        return {"done": False, "task": task.to_json(), "progress": progress}

    @app.get("/api/dialogues/{dialogue_id}")
    def get_dialogue(dialogue_id: str):
        return store.task(dialogue_id).to_json()

    @app.post("/api/judgments")
    def post_judgment(body: JudgmentBody):
        judgment = store.submit(Judgment(
            dialogue_id=body.dialogue_id,
            evaluator_id=body.evaluator_id,
            bias_free=body.bias_free,
            quality_ok=body.quality_ok,
            slot_consistent=body.slot_consistent,
            note=body.note,
            client_key=body.client_key,
        ))
        return {"ok": True, "judgment": judgment.to_json()}

    @app.get("/api/summary")
    def get_summary():
        return store.summarize()

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
