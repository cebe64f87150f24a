"""Shared fixture builders for the test suite."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from duetwoz.dst import PredictionRecord
from duetwoz.model import (
    Dialogue,
    DialogueState,
    SpeechAct,
    Turn,
    User2Record,
    default_schema,
    update_state,
)

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def flat_state(mapping: dict[str, str]) -> DialogueState:
    return DialogueState.from_flat(mapping, default_schema(), strict=False)


def make_turn(
    index: int,
    user1: str,
    agent: str = "",
    delta: dict[str, str] | None = None,
    cumulative: DialogueState | None = None,
    previous: DialogueState | None = None,
    user2: tuple[str, SpeechAct, int] | User2Record | None = None,
) -> Turn:
    delta_state = flat_state(delta or {})
    base = previous if previous is not None else DialogueState()
    cumulative_state = cumulative if cumulative is not None else update_state(base, delta_state)
    if isinstance(user2, tuple):
        user2 = User2Record(text=user2[0], act=user2[1], attempts=user2[2])
    return Turn(
        index=index,
        agent=agent,
        user1=user1,
        user2=user2,
        gold_delta=delta_state,
        gold_cumulative=cumulative_state,
    )


def make_dialogue(dialogue_id: str, domains: set[str], turn_specs: list[dict]) -> Dialogue:
    turns = []
    previous = DialogueState()
    for position, spec in enumerate(turn_specs, start=1):
        turn = make_turn(index=position, previous=previous, **spec)
        turns.append(turn)
        previous = turn.gold_cumulative
    return Dialogue(id=dialogue_id, domains=frozenset(domains), turns=tuple(turns))


def records_from_states(
    dialogue: Dialogue, cumulatives: list[DialogueState], status: str = "ok"
) -> list[PredictionRecord]:
    """Prediction records whose per-turn deltas are diffs of the given cumulatives."""
    records = []
    previous = DialogueState()
    for turn, cumulative in zip(dialogue.turns, cumulatives):
        delta = DialogueState(
            {name: value for name, value in cumulative.items() if previous.get(name) != value}
        )
        records.append(PredictionRecord(
            dialogue_id=dialogue.id,
            turn_index=turn.index,
            raw_output=json.dumps(delta.to_flat()),
            parsed_delta=delta,
            cumulative=update_state(previous, delta),
            parse_status=status,
        ))
        previous = update_state(previous, delta)
    return records


def gold_echo_records(dialogue: Dialogue) -> list[PredictionRecord]:
    return records_from_states(dialogue, [t.gold_cumulative for t in dialogue.turns])


# --- randomized fixture generation for oracle suites ---

_VALUE_POOL = {
    "area": ["north", "south", "east", "west", "centre"],
    "pricerange": ["cheap", "moderate", "expensive"],
    "parking": ["yes", "no"],
    "internet": ["yes", "no"],
    "type": ["hotel", "guest house"],
    "food": ["mediterranean", "chinese", "british", "indian"],
    "name": ["warkworth house", "curry garden", "alpha tower", "the gallery"],
    "book_people": ["1", "2", "4", "6"],
    "book_day": ["monday", "tuesday", "friday"],
    "book_stay": ["1", "2", "3"],
    "book_time": ["9:05", "17:15", "12:30"],
    "leaveAt": ["9:05", "10:00", "17:15"],
    "arriveBy": ["8:45", "16:30", "21:00"],
    "destination": ["cambridge", "london", "ely"],
    "departure": ["norwich", "stansted", "peterborough"],
    "day": ["monday", "wednesday", "sunday"],
    "stars": ["2", "3", "4"],
}
_FILLER_WORDS = ["please", "thanks", "looking", "for", "a", "nice", "option", "today", "we", "need"]


def random_dialogue(rng: random.Random, dialogue_id: str, max_turns: int = 6) -> Dialogue:
    schema = default_schema()
    domains = set(rng.sample(["attraction", "hotel", "restaurant", "taxi", "train"],
                             k=rng.randint(1, 2)))
    slots = [e.name for e in schema if e.name.domain in domains]
    turn_specs = []
    for _ in range(rng.randint(1, max_turns)):
        delta = {}
        for slot in rng.sample(slots, k=min(len(slots), rng.randint(0, 3))):
            pool = _VALUE_POOL.get(slot.slot, ["something"])
            value = rng.choice(pool)
            if rng.random() < 0.1:
                value = "dontcare"
            delta[str(slot)] = value
        words = [rng.choice(_FILLER_WORDS) for _ in range(rng.randint(2, 6))]
        # sometimes mention a delta value so copy_value/inform classes appear
        mentioned = [v for v in delta.values() if v != "dontcare"]
        if mentioned and rng.random() < 0.7:
            words.insert(rng.randrange(len(words)), rng.choice(mentioned))
        user1 = " ".join(words)
        agent_words = [rng.choice(_FILLER_WORDS) for _ in range(rng.randint(2, 5))]
        if mentioned and rng.random() < 0.3:
            agent_words.append(rng.choice(mentioned))
        user2 = None
        if rng.random() < 0.4:
            act = rng.choice([SpeechAct.CONSTATIVES, SpeechAct.DIRECTIVES,
                              SpeechAct.COMMISSIVES, SpeechAct.ACKNOWLEDGMENTS])
            text_words = [rng.choice(_FILLER_WORDS) for _ in range(rng.randint(2, 5))]
            if mentioned and rng.random() < 0.5:
                text_words.append(rng.choice(mentioned))
            user2 = (" ".join(text_words), act, rng.randint(1, 3))
        turn_specs.append({
            "user1": user1,
            "agent": "" if not turn_specs else " ".join(agent_words),
            "delta": delta,
            "user2": user2,
        })
    return make_dialogue(dialogue_id, domains, turn_specs)


def perturbed_records(rng: random.Random, dialogue: Dialogue) -> list[PredictionRecord]:
    """Predictions that are sometimes right, sometimes wrong in varied ways."""
    schema = default_schema()
    in_domain = [e.name for e in schema if e.name.domain in dialogue.domains]
    cumulatives = []
    for turn in dialogue.turns:
        entries = dict(turn.gold_cumulative.items())
        roll = rng.random()
        if roll < 0.35:
            pass  # exact
        elif roll < 0.6 and entries:
            entries.pop(rng.choice(sorted(entries, key=str)))
        elif roll < 0.8 and entries:
            victim = rng.choice(sorted(entries, key=str))
            pool = _VALUE_POOL.get(victim.slot, ["other"])
            entries[victim] = flat_state({str(victim): rng.choice(pool)}).get(victim)
        else:
            extra = rng.choice(in_domain)
            pool = _VALUE_POOL.get(extra.slot, ["other"])
            entries[extra] = flat_state({str(extra): rng.choice(pool)}).get(extra)
        cumulatives.append(DialogueState(entries))
    return records_from_states(dialogue, cumulatives)


@pytest.fixture
def schema():
    return default_schema()
