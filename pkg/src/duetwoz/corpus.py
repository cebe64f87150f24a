"""Corpus ingest and serialization.

Reads MultiWOZ 2.1-format files into the internal model and round-trips the
extended format (second-user records plus pipeline metadata) with full
fidelity. Extended files are written deterministically: two saves of equal
input are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import FormatError
from .model import (
    DOMAINS,
    Dialogue,
    DialogueState,
    SlotSchema,
    SpeechAct,
    Turn,
    User2Record,
    canonicalize_value,
    default_schema,
    update_state,
)

logger = logging.getLogger(__name__)

FORMAT_MULTIWOZ21 = "multiwoz21"
FORMAT_EXTENDED = "duetwoz-extended"

# metadata "book" keys -> our slot suffixes
_BOOK_SLOTS = {"people": "book_people", "day": "book_day", "stay": "book_stay", "time": "book_time"}
_SKIP_VALUES = {"", "not mentioned", "none"}


@dataclass(frozen=True)
class CorpusFile:
    path: Path
    format: str

    def __post_init__(self) -> None:
        if self.format not in (FORMAT_MULTIWOZ21, FORMAT_EXTENDED):
            raise ValueError(f"unknown corpus format: {self.format!r}")


@dataclass
class IngestReport:
    dialogues_read: int = 0
    dialogues_skipped: list[tuple[str, str]] = field(default_factory=list)
    turn_count_histogram: dict[int, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return len(self.dialogues_skipped)

    def warn(self, message: str) -> None:
        self.warnings.append(message)
        logger.warning(message)

    def to_json(self) -> dict:
        return {
            "dialogues_read": self.dialogues_read,
            "dialogues_skipped": [list(item) for item in self.dialogues_skipped],
            "turn_count_histogram": {str(k): v for k, v in sorted(self.turn_count_histogram.items())},
            "warnings": self.warnings,
        }


@dataclass(frozen=True)
class PipelineMeta:
    generator_model: str
    generated_at: str
    prompt_version: str

    def to_json(self) -> dict:
        return {
            "generator_model": self.generator_model,
            "generated_at": self.generated_at,
            "prompt_version": self.prompt_version,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PipelineMeta":
        return cls(
            generator_model=payload["generator_model"],
            generated_at=payload["generated_at"],
            prompt_version=payload["prompt_version"],
        )


def detect_format(path: Path | str) -> str:
    """Sniff the corpus format from the first dialogue object's keys."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise FormatError("corpus file is not a JSON object keyed by dialogue id")
    for value in payload.values():
        if isinstance(value, dict) and "log" in value:
            return FORMAT_MULTIWOZ21
        if isinstance(value, dict) and "turns" in value:
            return FORMAT_EXTENDED
        break
    return FORMAT_MULTIWOZ21 if not payload else FORMAT_EXTENDED


def file_sha256(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_corpus(
    file: CorpusFile | Path | str,
    domain_filter: Optional[Iterable[str]] = None,
    schema: Optional[SlotSchema] = None,
) -> tuple[list[Dialogue], IngestReport]:
    """Load a corpus file into dialogues, in deterministic id-sorted order.

    Dialogues whose annotations touch only out-of-scope domains (hospital,
    police, ...) are skipped with a reason; in-scope dialogues keep in-scope
    slots and drop the rest with a warning. ``domain_filter`` keeps only
    dialogues that involve at least one of the given domains.
    """
    if not isinstance(file, CorpusFile):
        file = CorpusFile(Path(file), detect_format(file))
    schema = schema or default_schema()
    with open(file.path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FormatError("corpus file is not a JSON object keyed by dialogue id")

    report = IngestReport()
    wanted = frozenset(domain_filter) if domain_filter else None
    dialogues: list[Dialogue] = []
    for dialogue_id in sorted(payload):
        raw = payload[dialogue_id]
        if not isinstance(raw, dict):
            raise FormatError("dialogue entry is not an object", dialogue_id=dialogue_id)
        if file.format == FORMAT_MULTIWOZ21:
            dialogue = _read_multiwoz_dialogue(dialogue_id, raw, schema, report)
        else:
            dialogue = _read_extended_dialogue(dialogue_id, raw, schema)
        if dialogue is None:
            continue
        if wanted is not None and not (dialogue.domains & wanted):
            report.dialogues_skipped.append((dialogue_id, "outside domain filter"))
            continue
        report.dialogues_read += 1
        count = len(dialogue.turns)
        report.turn_count_histogram[count] = report.turn_count_histogram.get(count, 0) + 1
        dialogues.append(dialogue)
    return dialogues, report


def _clean_value(raw: object) -> Optional[str]:
    if not isinstance(raw, str):
        return None
    text = raw.strip()
    if text.lower() in _SKIP_VALUES:
        return None
    # MultiWOZ 2.1 keeps annotation alternatives as "a|b"; take the first.
    if "|" in text:
        text = text.split("|", 1)[0].strip()
    return text or None


def _state_from_metadata(
    dialogue_id: str,
    turn_index: int,
    metadata: dict,
    schema: SlotSchema,
    report: IngestReport,
    dropped_domains: set[str],
) -> DialogueState:
    entries = {}
    for domain, groups in metadata.items():
        if domain not in DOMAINS:
            if any(_clean_value(v) for v in groups.get("semi", {}).values()) or any(
                _clean_value(v) for k, v in groups.get("book", {}).items() if k != "booked"
            ):
                dropped_domains.add(domain)
            continue
        if not isinstance(groups, dict):
            raise FormatError(
                "domain metadata is not an object",
                dialogue_id=dialogue_id,
                json_path=f"log[{turn_index * 2 - 1}].metadata.{domain}",
            )
        pairs: list[tuple[str, object]] = []
        for slot, value in groups.get("semi", {}).items():
            pairs.append((slot, value))
        for slot, value in groups.get("book", {}).items():
            if slot == "booked":
                continue
            pairs.append((_BOOK_SLOTS.get(slot, f"book_{slot}"), value))
        for slot, value in pairs:
            text = _clean_value(value)
            if text is None:
                continue
            name = schema.resolve(f"{domain}-{slot}")
            if name is None:
                report.warn(f"{dialogue_id}: dropping unknown slot {domain}-{slot}")
                continue
            entries[name] = canonicalize_value(name, text, schema, strict=False)
    return DialogueState(entries)


def _read_multiwoz_dialogue(
    dialogue_id: str,
    raw: dict,
    schema: SlotSchema,
    report: IngestReport,
) -> Optional[Dialogue]:
    log = raw.get("log")
    if not isinstance(log, list):
        raise FormatError("missing or invalid 'log' list", dialogue_id=dialogue_id, json_path="log")
    if not log:
        report.dialogues_skipped.append((dialogue_id, "empty log"))
        return None
    if len(log) % 2:
        report.warn(f"{dialogue_id}: odd log length {len(log)}, dropping trailing user utterance")
        log = log[:-1]
        if not log:
            report.dialogues_skipped.append((dialogue_id, "empty log"))
            return None

    goal = raw.get("goal", {})
    goal_domains = {d for d in DOMAINS if isinstance(goal.get(d), dict) and goal[d]}
    dropped_domains: set[str] = set()

    turns: list[Turn] = []
    previous = DialogueState()
    for turn_index in range(1, len(log) // 2 + 1):
        user_entry = log[2 * turn_index - 2]
        system_entry = log[2 * turn_index - 1]
        for position, entry in ((2 * turn_index - 2, user_entry), (2 * turn_index - 1, system_entry)):
            if not isinstance(entry, dict) or not isinstance(entry.get("text"), str):
                raise FormatError(
                    "log entry has no text", dialogue_id=dialogue_id, json_path=f"log[{position}].text"
                )
        metadata = system_entry.get("metadata")
        if not isinstance(metadata, dict):
            raise FormatError(
                "system turn has no metadata",
                dialogue_id=dialogue_id,
                json_path=f"log[{2 * turn_index - 1}].metadata",
            )
        source_state = _state_from_metadata(
            dialogue_id, turn_index, metadata, schema, report, dropped_domains
        )
        delta = DialogueState(
            {name: value for name, value in source_state.items() if previous.get(name) != value}
        )
        cumulative = update_state(previous, delta)
        if len(cumulative) != len(source_state):
            report.warn(
                f"{dialogue_id}: turn {turn_index} annotation dropped slots; "
                "keeping them (cumulative states are monotone)"
            )
        agent = "" if turn_index == 1 else str(log[2 * turn_index - 3]["text"])
        turns.append(
            Turn(
                index=turn_index,
                agent=agent,
                user1=str(user_entry["text"]),
                user2=None,
                gold_delta=delta,
                gold_cumulative=cumulative,
            )
        )
        previous = cumulative

    state_domains = set().union(*(set(t.gold_cumulative.domains()) for t in turns)) if turns else set()
    domains = (goal_domains | state_domains) & set(DOMAINS)
    if dropped_domains:
        report.warn(
            f"{dialogue_id}: dropped out-of-scope domain annotations: {sorted(dropped_domains)}"
        )
    if not domains:
        report.dialogues_skipped.append((dialogue_id, "no in-scope domains"))
        return None
    return Dialogue(id=dialogue_id, domains=frozenset(domains), turns=tuple(turns))


def _read_extended_dialogue(dialogue_id: str, raw: dict, schema: SlotSchema) -> Dialogue:
    try:
        domains = frozenset(raw["domains"])
        turns = []
        for turn_payload in raw["turns"]:
            user2 = None
            user2_payload = turn_payload.get("user2")
            if user2_payload is not None:
                user2 = User2Record(
                    text=user2_payload.get("text"),
                    act=SpeechAct.parse(user2_payload["act"]),
                    attempts=int(user2_payload["attempts"]),
                )
            turns.append(
                Turn(
                    index=int(turn_payload["index"]),
                    agent=turn_payload["agent"],
                    user1=turn_payload["user1"],
                    user2=user2,
                    gold_delta=DialogueState.from_flat(
                        turn_payload["gold_delta"], schema, strict=False
                    ),
                    gold_cumulative=DialogueState.from_flat(
                        turn_payload["gold_cumulative"], schema, strict=False
                    ),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed extended dialogue: {exc}", dialogue_id=dialogue_id) from exc
    dialogue = Dialogue(id=dialogue_id, domains=domains, turns=tuple(turns))
    dialogue.validate()
    return dialogue


def _turn_to_json(turn: Turn) -> dict:
    user2: Optional[dict] = None
    if turn.user2 is not None:
        user2 = {"act": turn.user2.act.value, "attempts": turn.user2.attempts}
        if turn.user2.text is not None:
            user2["text"] = turn.user2.text
    return {
        "index": turn.index,
        "agent": turn.agent,
        "user1": turn.user1,
        "user2": user2,
        "gold_delta": turn.gold_delta.to_flat(),
        "gold_cumulative": turn.gold_cumulative.to_flat(),
    }


def dialogue_payload(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "domains": sorted(dialogue.domains),
        "turns": [_turn_to_json(turn) for turn in dialogue.turns],
    }


def dialogue_from_json(dialogue_id: str, payload: dict, schema: Optional[SlotSchema] = None) -> Dialogue:
    """Rebuild a dialogue from its extended-format JSON object."""
    return _read_extended_dialogue(dialogue_id, payload, schema or default_schema())


def dialogue_to_json(dialogue: Dialogue, meta: PipelineMeta) -> dict:
    return {**dialogue_payload(dialogue), "pipeline_meta": meta.to_json()}


def save_extended(dialogues: list[Dialogue], meta: PipelineMeta, path: Path | str) -> None:
    """Write the extended corpus deterministically (sorted keys, stable layout)."""
    payload = {dialogue.id: dialogue_to_json(dialogue, meta) for dialogue in dialogues}
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    path = Path(path)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_text(text, encoding="utf-8")
    os.replace(tmp_path, path)


def read_pipeline_meta(path: Path | str) -> Optional[PipelineMeta]:
    """Pipeline metadata of the first dialogue in an extended file, if any."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    for value in payload.values():
        if isinstance(value, dict) and "pipeline_meta" in value:
            return PipelineMeta.from_json(value["pipeline_meta"])
    return None
