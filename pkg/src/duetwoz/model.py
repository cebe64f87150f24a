"""Core domain types: dialogues, turns, slots, states, speech acts, the slot ontology.

All types are immutable values; the operations are pure functions, so everything
here is safe to share across worker threads.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Optional

from .errors import CategoricalViolation, FormatError

logger = logging.getLogger(__name__)

DOMAINS = ("attraction", "hotel", "restaurant", "taxi", "train")

# Slots whose values are clock times and get normalized to H:MM (24-hour).
TIME_SLOTS = frozenset({
    "taxi-leaveAt", "taxi-arriveBy",
    "train-leaveAt", "train-arriveBy",
    "restaurant-book_time",
})

_DONTCARE_FORMS = frozenset({
    "dontcare", "dont care", "don't care", "do not care", "do n't care",
})
_NONE_FORMS = frozenset({"", "none", "not mentioned", "null"})

_WS_RE = re.compile(r"\s+")


def _collapse_ws(text: str) -> str:
    return _WS_RE.sub(" ", text.strip())


@dataclass(frozen=True, order=True)
class SlotName:
    """A (domain, slot) pair, e.g. ``hotel-area``."""

    domain: str
    slot: str

    def __str__(self) -> str:
        return f"{self.domain}-{self.slot}"

    @classmethod
    def parse(cls, text: str) -> "SlotName":
        domain, sep, slot = text.partition("-")
        if not sep or not domain or not slot:
            raise ValueError(f"not a domain-slot name: {text!r}")
        return cls(domain, slot)


class SpeechAct(Enum):
    """Four-way speech act taxonomy plus the absent marker."""

    CONSTATIVES = "constatives"
    DIRECTIVES = "directives"
    COMMISSIVES = "commissives"
    ACKNOWLEDGMENTS = "acknowledgments"
    NONE = "none"

    @property
    def label(self) -> str:
        """Capitalized option word as it appears in prompts ("Constatives", ...)."""
        return self.value.capitalize()

    @classmethod
    def parse(cls, text: str) -> "SpeechAct":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown speech act: {text!r}") from None


# The four selectable acts, in taxonomy order.
ACT_OPTIONS = (
    SpeechAct.CONSTATIVES,
    SpeechAct.DIRECTIVES,
    SpeechAct.COMMISSIVES,
    SpeechAct.ACKNOWLEDGMENTS,
)


@dataclass(frozen=True)
class SlotValue:
    """A slot's filled value: a literal, "dontcare", requested ("?"), or none.

    ``none`` never appears inside a DialogueState (absent key means none); it
    exists so canonicalization can signal "drop this entry" to callers.
    """

    kind: str  # literal | dontcare | requested | none
    text: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == "literal":
            if not self.text:
                raise ValueError("literal slot value needs non-empty text")
        elif self.kind in ("dontcare", "requested", "none"):
            if self.text is not None:
                raise ValueError(f"{self.kind} value carries no text")
        else:
            raise ValueError(f"unknown value kind: {self.kind!r}")

    @classmethod
    def literal(cls, text: str) -> "SlotValue":
        return cls("literal", text)

    def render(self) -> str:
        """Serialization used in prompts and corpus files."""
        if self.kind == "requested":
            return "?"
        if self.kind == "dontcare":
            return "dontcare"
        if self.kind == "none":
            return "none"
        assert self.text is not None
        return self.text


DONTCARE = SlotValue("dontcare")
REQUESTED = SlotValue("requested")
NONE_VALUE = SlotValue("none")


@dataclass(frozen=True)
class SlotEntry:
    name: SlotName
    description: str
    categorical: Optional[tuple[str, ...]] = None


class SlotSchema:
    """The slot ontology: ordered entries with descriptions and categorical lists."""

    def __init__(self, entries: list[SlotEntry]):
        self.entries = tuple(entries)
        self._by_name = {entry.name: entry for entry in self.entries}
        self._by_key = {str(entry.name).lower(): entry for entry in self.entries}
        if len(self._by_name) != len(self.entries):
            raise ValueError("duplicate slot names in schema")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: SlotName) -> bool:
        return name in self._by_name

    def __iter__(self) -> Iterator[SlotEntry]:
        return iter(self.entries)

    def entry(self, name: SlotName) -> SlotEntry:
        return self._by_name[name]

    def categorical_values(self, name: SlotName) -> Optional[tuple[str, ...]]:
        entry = self._by_name.get(name)
        return entry.categorical if entry else None

    def is_boolean(self, name: SlotName) -> bool:
        values = self.categorical_values(name)
        return values is not None and set(values) == {"yes", "no"}

    def slots_for_domains(self, domains: frozenset[str] | set[str]) -> tuple[SlotName, ...]:
        return tuple(e.name for e in self.entries if e.name.domain in domains)

    def resolve(self, raw_name: str) -> Optional[SlotName]:
        """Map a model-emitted slot name onto the schema, or None if unknown.

        Tolerates case differences and space/underscore swaps in the slot part
        ("Hotel-Name", "restaurant-book people").
        """
        key = _collapse_ws(raw_name).lower()
        entry = self._by_key.get(key)
        if entry is None:
            entry = self._by_key.get(key.replace(" ", "_"))
        if entry is None:
            entry = self._by_key.get(key.replace("_", " "))
        return entry.name if entry else None

    @classmethod
    def from_mapping(cls, slots: Mapping[str, str], categorical: Mapping[str, list[str]]) -> "SlotSchema":
        entries = []
        for raw_name, description in slots.items():
            name = SlotName.parse(raw_name)
            allowed = categorical.get(raw_name)
            entries.append(SlotEntry(name, description, tuple(allowed) if allowed else None))
        unknown = set(categorical) - set(slots)
        if unknown:
            raise ValueError(f"categorical entries for unknown slots: {sorted(unknown)}")
        return cls(entries)

    @classmethod
    def from_file(cls, path: Path | str) -> "SlotSchema":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        return cls.from_mapping(payload["slots"], payload.get("categorical", {}))

    @classmethod
    def bundled(cls) -> "SlotSchema":
        payload = json.loads(
            resources.files("duetwoz.data").joinpath("slot_schema.json").read_text("utf-8")
        )
        return cls.from_mapping(payload["slots"], payload.get("categorical", {}))

    def slot_block(self) -> dict[str, str]:
        """Ordered name -> description mapping, as rendered into the task preamble."""
        return {str(e.name): e.description for e in self.entries}

    def categorical_block(self) -> dict[str, list[str]]:
        return {str(e.name): list(e.categorical) for e in self.entries if e.categorical}


_default_schema: Optional[SlotSchema] = None


def default_schema() -> SlotSchema:
    global _default_schema
    if _default_schema is None:
        _default_schema = SlotSchema.bundled()
    return _default_schema


def _load_aliases() -> dict[str, str]:
    payload = json.loads(
        resources.files("duetwoz.data").joinpath("value_aliases.json").read_text("utf-8")
    )
    return dict(payload["aliases"])


_aliases: Optional[dict[str, str]] = None


def value_aliases() -> dict[str, str]:
    global _aliases
    if _aliases is None:
        _aliases = _load_aliases()
    return _aliases


_TIME_COLON_RE = re.compile(r"^(\d{1,2}):(\d{2})$")
_TIME_BARE_RE = re.compile(r"^(\d{3,4})$")


def _normalize_time(text: str) -> Optional[str]:
    """H:MM 24-hour form for "HH:MM" / "H:MM" / "HHMM" inputs, else None."""
    match = _TIME_COLON_RE.match(text)
    if match:
        hour, minute = int(match.group(1)), int(match.group(2))
    else:
        match = _TIME_BARE_RE.match(text)
        if not match:
            return None
        digits = match.group(1)
        hour, minute = int(digits[:-2]), int(digits[-2:])
    if hour > 23 or minute > 59:
        return None
    return f"{hour}:{minute:02d}"


def canonicalize_value(
    slot: SlotName,
    raw: str,
    schema: Optional[SlotSchema] = None,
    *,
    strict: bool = True,
) -> SlotValue:
    """Normalize a raw value string for comparison against gold labels.

    Lowercases, collapses whitespace, maps "?" to requested and the dontcare
    spellings to dontcare, applies the shipped alias table, and normalizes
    clock times on time slots. Categorical slots are checked against their
    allowed list; ``strict=False`` keeps an out-of-list literal verbatim with
    a warning instead of raising (the comparison will simply fail).

    Raises:
        CategoricalViolation: strict mode, categorical slot, value not allowed.
    """
    schema = schema or default_schema()
    text = _collapse_ws(raw)
    if text == "?":
        return REQUESTED
    lowered = text.lower()
    if lowered in _DONTCARE_FORMS:
        return DONTCARE
    if lowered in _NONE_FORMS:
        return NONE_VALUE
    lowered = value_aliases().get(lowered, lowered)
    if lowered == "dontcare":
        return DONTCARE
    if str(slot) in TIME_SLOTS:
        normalized = _normalize_time(lowered)
        if normalized is None:
            logger.warning("unrecognized time form kept verbatim: %s=%r", slot, lowered)
        else:
            lowered = normalized
    allowed = schema.categorical_values(slot)
    if allowed is not None and lowered not in allowed:
        if strict:
            raise CategoricalViolation(str(slot), lowered, allowed)
        logger.warning("categorical value kept verbatim: %s=%r not in %s", slot, lowered, list(allowed))
    return SlotValue.literal(lowered)


class DialogueState:
    """An immutable map from SlotName to SlotValue; an absent key means none.

    Entries whose value is the none kind are dropped at construction, so the
    absent-key convention holds by construction.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Optional[Mapping[SlotName, SlotValue]] = None):
        cleaned = {
            name: value
            for name, value in (entries or {}).items()
            if value.kind != "none"
        }
        object.__setattr__(self, "_entries", cleaned)

    @classmethod
    def from_flat(
        cls,
        flat: Mapping[str, str],
        schema: Optional[SlotSchema] = None,
        *,
        strict: bool = True,
    ) -> "DialogueState":
        """Build a state from a {"hotel-area": "north"} style mapping, canonicalizing values."""
        schema = schema or default_schema()
        entries: dict[SlotName, SlotValue] = {}
        for raw_name, raw_value in flat.items():
            name = SlotName.parse(raw_name)
            if name not in schema:
                raise FormatError(f"slot {raw_name!r} not in schema")
            entries[name] = canonicalize_value(name, raw_value, schema, strict=strict)
        return cls(entries)

    def to_flat(self) -> dict[str, str]:
        """Rendered {slot: value} mapping with slots sorted by name."""
        return {str(name): value.render() for name, value in sorted(self._entries.items())}

    def get(self, name: SlotName) -> Optional[SlotValue]:
        return self._entries.get(name)

    def items(self):
        return self._entries.items()

    def keys(self):
        return self._entries.keys()

    def values(self):
        return self._entries.values()

    def domains(self) -> frozenset[str]:
        return frozenset(name.domain for name in self._entries)

    def restrict_to_domain(self, domain: str) -> "DialogueState":
        return DialogueState({n: v for n, v in self._entries.items() if n.domain == domain})

    def update(self, delta: "DialogueState") -> "DialogueState":
        """Union update: keep all keys, delta wins on collision. Pure."""
        merged = dict(self._entries)
        merged.update(delta._entries)
        return DialogueState(merged)

    def __contains__(self, name: SlotName) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DialogueState):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(frozenset(self._entries.items()))

    def __repr__(self) -> str:
        return f"DialogueState({self.to_flat()})"


EMPTY_STATE = DialogueState()


def update_state(prev: DialogueState, delta: DialogueState) -> DialogueState:
    """Cumulative-state update: map union where the delta value wins on collision."""
    return prev.update(delta)


def states_equal(a: DialogueState, b: DialogueState) -> bool:
    """Exact-match comparison after dropping requested-valued entries from both sides."""
    left = {n: v for n, v in a.items() if v.kind != "requested"}
    right = {n: v for n, v in b.items() if v.kind != "requested"}
    return left == right


@dataclass(frozen=True)
class User2Record:
    """Synthesized second-user data attached to a turn.

    ``text`` is None when the extension pipeline ran but discarded every
    attempt; the recorded act is then none and ``attempts`` counts the failed
    generation attempts (0 when the act itself was unparseable).
    """

    text: Optional[str]
    act: SpeechAct
    attempts: int

    def __post_init__(self) -> None:
        if self.text is not None:
            if self.act is SpeechAct.NONE:
                raise ValueError("user2 text present but act is none")
            if not 1 <= self.attempts <= 3:
                raise ValueError(f"attempts out of range: {self.attempts}")
        else:
            if self.act is not SpeechAct.NONE:
                raise ValueError("user2 text absent but act recorded")
            if not 0 <= self.attempts <= 3:
                raise ValueError(f"attempts out of range: {self.attempts}")


@dataclass(frozen=True)
class Turn:
    """One dialogue turn: agent context, user1 utterance, optional user2 record, gold states."""

    index: int  # 1-based
    agent: str  # may be empty at the first turn
    user1: str
    user2: Optional[User2Record]
    gold_delta: DialogueState
    gold_cumulative: DialogueState

    @property
    def user2_text(self) -> Optional[str]:
        return self.user2.text if self.user2 else None

    @property
    def act(self) -> SpeechAct:
        """Recorded speech act; none whenever no user2 utterance exists."""
        if self.user2 is None or self.user2.text is None:
            return SpeechAct.NONE
        return self.user2.act


@dataclass(frozen=True)
class Dialogue:
    id: str
    domains: frozenset[str]
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        if not self.domains:
            raise ValueError(f"dialogue {self.id} has no domains")
        bad = self.domains - set(DOMAINS)
        if bad:
            raise ValueError(f"dialogue {self.id} has out-of-scope domains: {sorted(bad)}")

    def validate(self) -> None:
        """Check turn invariants; raises FormatError on the first violation."""
        previous = EMPTY_STATE
        for position, turn in enumerate(self.turns, start=1):
            if turn.index != position:
                raise FormatError(
                    f"turn indices not contiguous from 1 (saw {turn.index} at position {position})",
                    dialogue_id=self.id,
                )
            expected = update_state(previous, turn.gold_delta)
            if expected != turn.gold_cumulative:
                raise FormatError(
                    f"turn {turn.index} cumulative state does not extend the previous one",
                    dialogue_id=self.id,
                )
            for state in (turn.gold_delta, turn.gold_cumulative):
                stray = state.domains() - self.domains
                if stray:
                    raise FormatError(
                        f"turn {turn.index} gold state references domains {sorted(stray)} "
                        f"outside {sorted(self.domains)}",
                        dialogue_id=self.id,
                    )
            previous = turn.gold_cumulative
