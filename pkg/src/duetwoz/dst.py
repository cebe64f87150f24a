"""Zero-shot DST inference: incremental prompt assembly, model queries, JSON
state-delta parsing, and predicted-state accumulation.

Prompts grow turn by turn: the first chunk carries the task preamble plus turn
1's transcript lines, each later chunk appends its own turn's lines, and the
model's prior replies are interleaved as assistant messages (chat-session
framing). A single-shot mode folds the whole transcript into one message for
providers without session reuse.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import AuthError, FormatError, RateLimitExhausted
from .gateway import ChatMessage, ChatRequest, Gateway
from .model import (
    DOMAINS,
    Dialogue,
    DialogueState,
    SlotName,
    SlotSchema,
    SlotValue,
    Turn,
    canonicalize_value,
    default_schema,
    update_state,
)

logger = logging.getLogger(__name__)

VARIANT_SINGLE = "single_user"
VARIANT_MULTI = "multi_user"
VARIANTS = (VARIANT_SINGLE, VARIANT_MULTI)

PARSE_OK = "ok"
PARSE_REPAIRED = "repaired"
PARSE_FAILED = "failed"

_FENCE_RE = re.compile(r"```[a-zA-Z]*\n?(.*?)```", re.DOTALL)


def build_task_preamble(schema: Optional[SlotSchema] = None,
                        template: Optional[str] = None) -> str:
    """Render the task preamble with the slot ontology blocks filled in."""
    schema = schema or default_schema()
    if template is None:
        template = resources.files("duetwoz.prompts").joinpath("dst_preamble.txt").read_text("utf-8")
    slot_block = json.dumps(schema.slot_block(), indent=4, ensure_ascii=False)
    categorical_block = json.dumps(schema.categorical_block(), indent=4, ensure_ascii=False)
    return (template
            .replace("{SLOT BLOCK}", slot_block)
            .replace("{CATEGORICAL BLOCK}", categorical_block))


def turn_lines(turn: Turn, variant: str) -> str:
    """Transcript lines contributed by one turn."""
    lines = [f'"agent": {turn.agent}', f'"user1": {turn.user1}']
    if variant == VARIANT_MULTI and turn.user2_text:
        lines.append(f'"user2": {turn.user2_text}')
    return "\n".join(lines)


def assemble_prompt(task_preamble: str, turns: Sequence[Turn], variant: str) -> list[ChatMessage]:
    """One user message per turn; the first carries the preamble.

    Under multi_user a "user2" line follows the turn's user1 line whenever the
    turn has a user2 utterance; with none anywhere the rendering is identical
    to single_user.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not turns:
        raise ValueError("at least one turn is required")
    messages = []
    for position, turn in enumerate(turns):
        chunk = turn_lines(turn, variant)
        if position == 0:
            chunk = task_preamble.rstrip("\n") + "\n\n" + chunk
        messages.append(ChatMessage("user", chunk))
    return messages


# --- model output parsing ---

def _first_json_payload(raw: str) -> tuple[Optional[object], str]:
    """First JSON object/array in raw, with the parse status it took to get it."""
    stripped = raw.strip()
    if stripped:
        try:
            payload = json.loads(stripped)
            if isinstance(payload, (dict, list)):
                return payload, PARSE_OK
        except json.JSONDecodeError:
            pass
    decoder = json.JSONDecoder()
    for index, char in enumerate(raw):
        if char not in "{[":
            continue
        try:
            payload, _ = decoder.raw_decode(raw[index:])
        except json.JSONDecodeError:
            continue
        if isinstance(payload, (dict, list)):
            return payload, PARSE_REPAIRED
    # bracket balancing for truncated tails; a bare opener is not extractable
    for index, char in enumerate(raw):
        if char not in "{[":
            continue
        tail = raw[index:].rstrip()
        if len(tail) < 2:
            break
        closer = "}" if char == "{" else "]"
        for repair in (closer, '"' + closer, closer + closer, '"' + closer + closer):
            try:
                payload = json.loads(tail + repair)
            except json.JSONDecodeError:
                continue
            if isinstance(payload, (dict, list)):
                return payload, PARSE_REPAIRED
        break
    return None, PARSE_FAILED


def _coerce_value(value: object) -> Optional[str]:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() else str(value)
    if isinstance(value, str):
        return value
    return None


def _flatten_entries(payload: object) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = []
    if isinstance(payload, dict):
        for key, value in payload.items():
            if isinstance(value, dict) and str(key).lower() in DOMAINS:
                for slot, nested in value.items():
                    pairs.append((f"{key}-{slot}", nested))
            else:
                pairs.append((str(key), value))
    elif isinstance(payload, list):
        for element in payload:
            if isinstance(element, dict):
                pairs.extend(_flatten_entries(element))
            elif isinstance(element, (list, tuple)) and len(element) == 2:
                pairs.append((str(element[0]), element[1]))
    return pairs


def parse_state_output(raw: str, schema: Optional[SlotSchema] = None) -> tuple[DialogueState, str]:
    """Extract a state delta from raw model output. Total: never raises.

    Tolerates code fences, surrounding prose, and truncated tails (status
    "repaired"); unknown slot names are dropped with a warning; entirely
    unextractable output yields an empty delta with status "failed".
    """
    schema = schema or default_schema()
    payload, status = _first_json_payload(raw)
    if payload is None:
        return DialogueState(), PARSE_FAILED
    entries: dict[SlotName, SlotValue] = {}
    for raw_name, raw_value in _flatten_entries(payload):
        name = schema.resolve(raw_name)
        if name is None:
            logger.warning("dropping unknown slot from model output: %r", raw_name)
            continue
        text = _coerce_value(raw_value)
        if text is None or not text.strip():
            continue
        entries[name] = canonicalize_value(name, text, schema, strict=False)
    return DialogueState(entries), status


# --- prediction records and the run loop ---

@dataclass(frozen=True)
class PredictionRecord:
    dialogue_id: str
    turn_index: int
    raw_output: str
    parsed_delta: DialogueState
    cumulative: DialogueState
    parse_status: str

    def to_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "raw_output": self.raw_output,
            "parsed_delta": self.parsed_delta.to_flat(),
            "cumulative": self.cumulative.to_flat(),
            "parse_status": self.parse_status,
        }

    @classmethod
    def from_json(cls, payload: dict, schema: Optional[SlotSchema] = None) -> "PredictionRecord":
        schema = schema or default_schema()
        return cls(
            dialogue_id=payload["dialogue_id"],
            turn_index=int(payload["turn_index"]),
            raw_output=payload["raw_output"],
            parsed_delta=DialogueState.from_flat(payload["parsed_delta"], schema, strict=False),
            cumulative=DialogueState.from_flat(payload["cumulative"], schema, strict=False),
            parse_status=payload["parse_status"],
        )


@dataclass
class RunManifest:
    model: str
    variant: str
    prompt_version: str
    corpus_path: Optional[str] = None
    corpus_sha256: Optional[str] = None
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    request_count: int = 0
    record_count: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, payload: dict) -> "RunManifest":
        return cls(**payload)


def manifest_path(predictions_path: Path | str) -> Path:
    path = Path(predictions_path)
    return path.with_name(path.name + ".manifest.json")


def write_predictions(records: Sequence[PredictionRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def load_predictions(path: Path | str, schema: Optional[SlotSchema] = None) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(PredictionRecord.from_json(json.loads(line), schema))
            except (json.JSONDecodeError, KeyError) as exc:
                raise FormatError(f"bad prediction record at line {line_no}: {exc}") from exc
    return records


def _utcnow() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


class DstRunner:
    """Drives per-dialogue inference; turns are sequential within a dialogue."""

    def __init__(
        self,
        gateway: Gateway,
        model: str,
        variant: str,
        *,
        schema: Optional[SlotSchema] = None,
        preamble: Optional[str] = None,
        session_mode: bool = True,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.gateway = gateway
        self.model = model
        self.variant = variant
        self.schema = schema or default_schema()
        self.preamble = preamble if preamble is not None else build_task_preamble(self.schema)
        self.session_mode = session_mode

    def _messages(self, chunks: list[ChatMessage], replies: list[str]) -> tuple[ChatMessage, ...]:
        if not self.session_mode:
            return (ChatMessage("user", "\n".join(chunk.content for chunk in chunks)),)
        woven: list[ChatMessage] = []
        for position, chunk in enumerate(chunks):
            woven.append(chunk)
            if position < len(replies):
                woven.append(ChatMessage("assistant", replies[position]))
        return tuple(woven)

    def run_dialogue(self, dialogue: Dialogue) -> list[PredictionRecord]:
        records: list[PredictionRecord] = []
        replies: list[str] = []
        cumulative = DialogueState()
        for turn in dialogue.turns:
            chunks = assemble_prompt(self.preamble, dialogue.turns[: turn.index], self.variant)
            request = ChatRequest(
                model=self.model,
                messages=self._messages(chunks, replies),
                temperature=self.gateway.config.temperature,
                top_p=self.gateway.config.top_p,
            )
            raw = self.gateway.complete(request).content
            replies.append(raw)
            delta, status = parse_state_output(raw, self.schema)
            cumulative = update_state(cumulative, delta)
            records.append(PredictionRecord(
                dialogue_id=dialogue.id,
                turn_index=turn.index,
                raw_output=raw,
                parsed_delta=delta,
                cumulative=cumulative,
                parse_status=status,
            ))
        return records


def run_dst(
    dialogues: Sequence[Dialogue],
    gateway: Gateway,
    model: str,
    variant: str,
    out_path: Path | str,
    *,
    schema: Optional[SlotSchema] = None,
    preamble: Optional[str] = None,
    session_mode: bool = True,
    workers: int = 1,
    corpus_path: Optional[str] = None,
    corpus_sha256: Optional[str] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> tuple[list[PredictionRecord], RunManifest]:
    """Predict states for every turn, streaming records to a JSONL file.

    Resumable: records already present in ``out_path`` are kept and their
    dialogues skipped. Hard gateway errors abort after the file is flushed.
    """
    runner = DstRunner(gateway, model, variant, schema=schema, preamble=preamble,
                       session_mode=session_mode)
    out_path = Path(out_path)
    manifest = RunManifest(
        model=model,
        variant=variant,
        prompt_version=gateway.prompt_version,
        corpus_path=corpus_path,
        corpus_sha256=corpus_sha256,
        started_at=_utcnow(),
    )

    existing: dict[str, list[PredictionRecord]] = {}
    if out_path.exists():
        for record in load_predictions(out_path, schema):
            existing.setdefault(record.dialogue_id, []).append(record)

    def predict(dialogue: Dialogue) -> list[PredictionRecord]:
        if dialogue.id in existing:
            return existing[dialogue.id]
        return runner.run_dialogue(dialogue)

    all_records: list[PredictionRecord] = []
    write_lock = threading.Lock()
    mode = "a" if existing else "w"
    with open(out_path, mode, encoding="utf-8") as handle:

        def emit(dialogue: Dialogue, records: list[PredictionRecord]) -> None:
            with write_lock:
                if dialogue.id not in existing:
                    for record in records:
                        handle.write(
                            json.dumps(record.to_json(), sort_keys=True, ensure_ascii=False) + "\n"
                        )
                    handle.flush()
                all_records.extend(records)
            if progress:
                progress(dialogue.id)

        try:
            if workers <= 1:
                for dialogue in dialogues:
                    emit(dialogue, predict(dialogue))
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    for dialogue, records in zip(dialogues, pool.map(predict, dialogues)):
                        emit(dialogue, records)
        except (AuthError, RateLimitExhausted, TimeoutError):
            manifest.finished_at = _utcnow()
            manifest.request_count = gateway.request_count
            manifest.record_count = len(all_records)
            manifest_path(out_path).write_text(
                json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            raise

    manifest.finished_at = _utcnow()
    manifest.request_count = gateway.request_count
    manifest.record_count = len(all_records)
    manifest_path(out_path).write_text(
        json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return all_records, manifest
