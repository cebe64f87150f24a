"""Dataset-extension pipeline: identify a speech act, generate a second-user
utterance, validate it, retry up to three times, else discard.

Dialogues are independent work units; turns within a dialogue are strictly
sequential because each turn's history includes earlier accepted user2
utterances.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import (
    AuthError,
    EmptyGeneration,
    RateLimitExhausted,
    UnparseableAct,
    UnparseableVerdict,
)
from .gateway import ChatMessage, ChatRequest, Gateway
from .model import (
    Dialogue,
    DialogueState,
    SpeechAct,
    Turn,
    User2Record,
)

logger = logging.getLogger(__name__)

PLACEHOLDERS = {
    "identification": ("{DIALOGUE HISTORY}", "{AGENT UTTERANCE}", "{USER1 UTTERANCE}"),
    "generation": ("{DIALOGUE HISTORY}", "{USER1 UTTERANCE}", "{SLOT VALUE OF CURRENT TURN}",
                   "{UTTERANCE TYPE}"),
    "validation": ("{AGENT UTTERANCE}", "{USER1 UTTERANCE}", "{USER2 UTTERANCE}",
                   "{SLOT VALUE OF CURRENT TURN}"),
}

_OPTION_LINE_RE = re.compile(
    r"^\s*- (Constatives|Directives|Commissives|Acknowledgments)\s*:", re.IGNORECASE
)
_ACT_WORD_RE = re.compile(
    r"\b(Constatives|Directives|Commissives|Acknowledgments)\b", re.IGNORECASE
)
_VERDICT_RE = re.compile(r"\b(True|False)\b", re.IGNORECASE)

GENERATION_WORD_LIMIT = 20


@dataclass(frozen=True)
class PromptTemplates:
    identification: str
    generation: str
    validation: str
    version: str

    def __post_init__(self) -> None:
        for kind in ("identification", "generation", "validation"):
            text = getattr(self, kind)
            for placeholder in PLACEHOLDERS[kind]:
                if placeholder not in text:
                    raise ValueError(f"{kind} template is missing {placeholder}")
        if len(_find_option_lines(self.identification)) != 4:
            raise ValueError("identification template must list the four act options")

    @classmethod
    def from_dir(cls, directory: Path | str) -> "PromptTemplates":
        directory = Path(directory)
        return cls(
            identification=(directory / "identification.txt").read_text("utf-8"),
            generation=(directory / "generation.txt").read_text("utf-8"),
            validation=(directory / "validation.txt").read_text("utf-8"),
            version=(directory / "VERSION").read_text("utf-8").strip(),
        )

    @classmethod
    def bundled(cls) -> "PromptTemplates":
        root = resources.files("duetwoz.prompts")
        return cls(
            identification=root.joinpath("identification.txt").read_text("utf-8"),
            generation=root.joinpath("generation.txt").read_text("utf-8"),
            validation=root.joinpath("validation.txt").read_text("utf-8"),
            version=root.joinpath("VERSION").read_text("utf-8").strip(),
        )


def _find_option_lines(template: str) -> list[int]:
    return [i for i, line in enumerate(template.splitlines()) if _OPTION_LINE_RE.match(line)]


def _fill(template: str, values: dict[str, str]) -> str:
    for placeholder, value in values.items():
        template = template.replace(placeholder, value)
    return template


def turn_seed(dialogue_id: str, turn_index: int, run_seed: int) -> int:
    """Stable per-turn seed; drives the option shuffle reproducibly."""
    digest = hashlib.sha256(f"{dialogue_id}:{turn_index}:{run_seed}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def shuffle_options(template: str, seed: int) -> str:
    """Permute the four act-option lines in place, keeping everything else."""
    lines = template.splitlines()
    positions = _find_option_lines(template)
    option_lines = [lines[i] for i in positions]
    random.Random(seed).shuffle(option_lines)
    for position, line in zip(positions, option_lines):
        lines[position] = line
    rendered = "\n".join(lines)
    if template.endswith("\n"):
        rendered += "\n"
    return rendered


def render_history(turns: Sequence[Turn]) -> str:
    """Prior turns as alternating Agent:/User1:/User2: lines.

    Includes previously accepted user2 utterances (the history is the evolving
    extended one); the empty agent opener of a first turn is omitted.
    """
    lines = []
    for turn in turns:
        if turn.agent:
            lines.append(f"Agent: {turn.agent}")
        lines.append(f"User1: {turn.user1}")
        if turn.user2_text:
            lines.append(f"User2: {turn.user2_text}")
    return "\n".join(lines)


def render_slots(state: DialogueState) -> str:
    """Gold slot block as compact JSON with deterministic slot order."""
    return json.dumps(state.to_flat(), ensure_ascii=False)


def parse_act_reply(reply: str) -> SpeechAct:
    """Exact-word match after trimming and case-folding; exactly one option must appear."""
    found = {match.lower() for match in _ACT_WORD_RE.findall(reply.strip())}
    if len(found) != 1:
        raise UnparseableAct(
            f"expected exactly one act option in reply, found {sorted(found)}: {reply[:200]!r}"
        )
    return SpeechAct(found.pop())


def parse_verdict_reply(reply: str) -> bool:
    """First standalone True/False token wins."""
    match = _VERDICT_RE.search(reply)
    if match is None:
        raise UnparseableVerdict(f"no True/False token in reply: {reply[:200]!r}")
    return match.group(1).lower() == "true"


@dataclass(frozen=True)
class RejectionEntry:
    attempt: int
    generated_text: str
    validator_reply: str


@dataclass(frozen=True)
class TurnExtensionResult:
    """Outcome of extending one turn.

    ``utterance`` is present iff some attempt validated True; ``attempts``
    counts generation attempts actually made. When the utterance is absent the
    output turn records act none even if an act was identified.
    """

    act: SpeechAct
    utterance: Optional[str]
    attempts: int
    rejection_log: tuple[RejectionEntry, ...] = ()

    def to_user2(self) -> User2Record:
        if self.utterance is not None:
            return User2Record(text=self.utterance, act=self.act, attempts=self.attempts)
        return User2Record(text=None, act=SpeechAct.NONE, attempts=self.attempts)


class TurnExtender:
    """Runs the identify/generate/validate cycle for single turns."""

    def __init__(self, gateway: Gateway, model: str, templates: Optional[PromptTemplates] = None,
                 run_seed: int = 0, max_attempts: int = 3):
        self.gateway = gateway
        self.model = model
        self.templates = templates or PromptTemplates.bundled()
        self.run_seed = run_seed
        self.max_attempts = max_attempts

    def _complete(self, prompt: str, salt: str) -> str:
        request = ChatRequest(
            model=self.model,
            messages=(ChatMessage("user", prompt),),
            temperature=self.gateway.config.temperature,
            top_p=self.gateway.config.top_p,
            cache_salt=salt,
        )
        return self.gateway.complete(request).content

    def identification_prompt(self, history: Sequence[Turn], agent: str, user1: str,
                              seed: int) -> str:
        shuffled = shuffle_options(self.templates.identification, seed)
        return _fill(shuffled, {
            "{DIALOGUE HISTORY}": render_history(history),
            "{AGENT UTTERANCE}": agent,
            "{USER1 UTTERANCE}": user1,
        })

    def identify_act(self, history: Sequence[Turn], agent: str, user1: str, seed: int,
                     salt: str = "id") -> SpeechAct:
        """Pick a speech act for the new utterance, with seed-shuffled options."""
        if not user1:
            raise ValueError("user1 utterance must be non-empty")
        prompt = self.identification_prompt(history, agent, user1, seed)
        return parse_act_reply(self._complete(prompt, salt))

    def generation_prompt(self, act: SpeechAct, history: Sequence[Turn], user1: str,
                          gold_cumulative: DialogueState) -> str:
        return _fill(self.templates.generation, {
            "{DIALOGUE HISTORY}": render_history(history),
            "{USER1 UTTERANCE}": user1,
            "{SLOT VALUE OF CURRENT TURN}": render_slots(gold_cumulative),
            "{UTTERANCE TYPE}": act.label,
        })

    def generate_user2(self, act: SpeechAct, history: Sequence[Turn], user1: str,
                       gold_cumulative: DialogueState, salt: str = "gen") -> str:
        if act is SpeechAct.NONE:
            raise ValueError("cannot generate an utterance for act none")
        prompt = self.generation_prompt(act, history, user1, gold_cumulative)
        reply = self._complete(prompt, salt).strip()
        if not reply:
            raise EmptyGeneration("generation reply was blank")
        if len(reply.split()) > GENERATION_WORD_LIMIT:
            logger.warning("generated utterance exceeds %d words: %r",
                           GENERATION_WORD_LIMIT, reply)
        return reply

    def validation_prompt(self, agent: str, user1: str, user2: str,
                          gold_cumulative: DialogueState) -> str:
        return _fill(self.templates.validation, {
            "{AGENT UTTERANCE}": agent,
            "{USER1 UTTERANCE}": user1,
            "{USER2 UTTERANCE}": user2,
            "{SLOT VALUE OF CURRENT TURN}": render_slots(gold_cumulative),
        })

    def validate_user2(self, agent: str, user1: str, user2: str,
                       gold_cumulative: DialogueState, salt: str = "val") -> bool:
        if not user2:
            raise ValueError("user2 utterance must be non-empty")
        prompt = self.validation_prompt(agent, user1, user2, gold_cumulative)
        return parse_verdict_reply(self._complete(prompt, salt))

    def extend_turn(self, dialogue_id: str, turn: Turn, history: Sequence[Turn]) -> TurnExtensionResult:
        """Identify once, then up to three generate/validate cycles.

        The first validated utterance wins; an unparseable identification
        discards the turn outright (attempts=0) since defaulting to an
        arbitrary act would bias the act distribution.
        """
        seed = turn_seed(dialogue_id, turn.index, self.run_seed)
        salt_base = f"{dialogue_id}:{turn.index}"
        try:
            act = self.identify_act(history, turn.agent, turn.user1, seed,
                                    salt=f"{salt_base}:id")
        except UnparseableAct as exc:
            logger.warning("%s turn %d: %s", dialogue_id, turn.index, exc)
            return TurnExtensionResult(act=SpeechAct.NONE, utterance=None, attempts=0)

        rejections: list[RejectionEntry] = []
        for attempt in range(1, self.max_attempts + 1):
            try:
                candidate = self.generate_user2(
                    act, history, turn.user1, turn.gold_cumulative,
                    salt=f"{salt_base}:gen:{attempt}",
                )
            except EmptyGeneration:
                rejections.append(RejectionEntry(attempt, "", "<empty generation>"))
                continue
            try:
                accepted = self.validate_user2(
                    turn.agent, turn.user1, candidate, turn.gold_cumulative,
                    salt=f"{salt_base}:val:{attempt}",
                )
                verdict_note = "True" if accepted else "False"
            except UnparseableVerdict as exc:
                accepted = False
                verdict_note = f"<unparseable: {exc}>"
            if accepted:
                return TurnExtensionResult(
                    act=act, utterance=candidate, attempts=attempt,
                    rejection_log=tuple(rejections),
                )
            rejections.append(RejectionEntry(attempt, candidate, verdict_note))
        return TurnExtensionResult(
            act=act, utterance=None, attempts=self.max_attempts,
            rejection_log=tuple(rejections),
        )

    def extend_dialogue(self, dialogue: Dialogue) -> Dialogue:
        """Extend every turn sequentially; gold states and texts are untouched."""
        extended: list[Turn] = []
        for turn in dialogue.turns:
            result = self.extend_turn(dialogue.id, turn, extended)
            extended.append(Turn(
                index=turn.index,
                agent=turn.agent,
                user1=turn.user1,
                user2=result.to_user2(),
                gold_delta=turn.gold_delta,
                gold_cumulative=turn.gold_cumulative,
            ))
        return Dialogue(id=dialogue.id, domains=dialogue.domains, turns=tuple(extended))


class Checkpoint:
    """Append-only JSONL of completed dialogues, for resumable extension runs."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.completed: dict[str, Dialogue] = {}
        if self.path.exists():
            from .corpus import dialogue_from_json  # local import to avoid a cycle
            with open(self.path, encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    payload = json.loads(line)
                    self.completed[payload["id"]] = dialogue_from_json(payload["id"], payload)

    def record(self, dialogue: Dialogue) -> None:
        from .corpus import dialogue_payload
        with self._lock:
            self.completed[dialogue.id] = dialogue
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(
                    {"id": dialogue.id, **dialogue_payload(dialogue)},
                    sort_keys=True, ensure_ascii=False,
                ) + "\n")
                handle.flush()


def extend_corpus(
    dialogues: Sequence[Dialogue],
    gateway: Gateway,
    model: str,
    *,
    templates: Optional[PromptTemplates] = None,
    run_seed: int = 0,
    workers: int = 1,
    checkpoint_path: Optional[Path | str] = None,
    progress: Optional[Callable[[Dialogue], None]] = None,
) -> list[Dialogue]:
    """Extend every turn of every dialogue, preserving order and original fields.

    Hard gateway errors (auth, exhausted retries, timeouts) abort the run
    after the checkpoint is flushed; rerunning with the same checkpoint path
    skips completed dialogues.
    """
    extender = TurnExtender(gateway, model, templates, run_seed)
    checkpoint = Checkpoint(checkpoint_path) if checkpoint_path else None

    def process(dialogue: Dialogue) -> Dialogue:
        if checkpoint and dialogue.id in checkpoint.completed:
            return checkpoint.completed[dialogue.id]
        extended = extender.extend_dialogue(dialogue)
        if checkpoint:
            checkpoint.record(extended)
        if progress:
            progress(extended)
        return extended

    if workers <= 1:
        return [process(dialogue) for dialogue in dialogues]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        try:
            return list(pool.map(process, dialogues))
        except (AuthError, RateLimitExhausted, TimeoutError):
            pool.shutdown(wait=False, cancel_futures=True)
            raise
