"""Evaluation metrics: JGA overall and per domain, the seven slot-class
accuracies, and slot accuracy, plus slot-class ground-truth derivation.

Everything here is a pure function over aligned prediction/gold pairs.
Zero-denominator fractions are reported as absent, never 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .dst import VARIANT_MULTI, VARIANT_SINGLE, PredictionRecord
from .errors import AlignmentError
from .model import (
    Dialogue,
    DialogueState,
    SlotName,
    SlotSchema,
    SlotValue,
    Turn,
    default_schema,
    states_equal,
)


class SlotClass(Enum):
    """How a gold slot value arises at a turn; every (turn, slot) pair gets one."""

    NONE = "none"
    DONTCARE = "dontcare"
    COPY_VALUE = "copy_value"
    TRUE = "true"
    FALSE = "false"
    REFER = "refer"
    INFORM = "inform"


# Classification precedence, most specific first (configuration-visible).
CLASS_PRECEDENCE = (
    SlotClass.NONE,
    SlotClass.DONTCARE,
    SlotClass.TRUE,
    SlotClass.FALSE,
    SlotClass.REFER,
    SlotClass.COPY_VALUE,
    SlotClass.INFORM,
)


@dataclass(frozen=True)
class AlignedTurn:
    """A prediction record joined with its dialogue and gold turn."""

    dialogue: Dialogue
    turn: Turn
    record: PredictionRecord

    @property
    def pred(self) -> DialogueState:
        return self.record.cumulative


def align_predictions(
    records: Sequence[PredictionRecord], dialogues: Sequence[Dialogue]
) -> list[AlignedTurn]:
    """Join records to gold turns 1:1 by (dialogue, turn); AlignmentError otherwise."""
    by_key = {(r.dialogue_id, r.turn_index): r for r in records}
    if len(by_key) != len(records):
        raise AlignmentError("duplicate (dialogue, turn) keys in predictions")
    gold_keys = {(d.id, t.index) for d in dialogues for t in d.turns}
    missing = gold_keys - set(by_key)
    extra = set(by_key) - gold_keys
    if missing or extra:
        raise AlignmentError(
            f"prediction/gold turn sets differ: {len(missing)} missing, {len(extra)} extra "
            f"(e.g. missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})"
        )
    return [
        AlignedTurn(dialogue=d, turn=t, record=by_key[(d.id, t.index)])
        for d in dialogues
        for t in d.turns
    ]


def _fraction(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def joint_goal_accuracy(rows: Sequence[AlignedTurn], *, on_deltas: bool = False) -> Optional[float]:
    """Fraction of turns whose entire predicted state matches gold.

    ``on_deltas`` switches the comparison from cumulative states to per-turn
    deltas (the narrower notational reading); cumulative is the default.
    """
    correct = sum(1 for row in rows if _row_correct(row, on_deltas))
    return _fraction(correct, len(rows))


def _row_correct(row: AlignedTurn, on_deltas: bool) -> bool:
    if on_deltas:
        return states_equal(row.record.parsed_delta, row.turn.gold_delta)
    return states_equal(row.pred, row.turn.gold_cumulative)


def _per_domain_counts(rows: Sequence[AlignedTurn]) -> dict[str, tuple[int, int]]:
    counts: dict[str, list[int]] = {}
    for row in rows:
        for domain in row.dialogue.domains:
            bucket = counts.setdefault(domain, [0, 0])
            bucket[1] += 1
            if states_equal(
                row.pred.restrict_to_domain(domain),
                row.turn.gold_cumulative.restrict_to_domain(domain),
            ):
                bucket[0] += 1
    return {domain: (b[0], b[1]) for domain, b in sorted(counts.items())}


def per_domain_jga(rows: Sequence[AlignedTurn]) -> dict[str, float]:
    """JGA restricted to each domain's slots, over turns of dialogues covering it."""
    return {
        domain: correct / total
        for domain, (correct, total) in _per_domain_counts(rows).items()
        if total
    }


def _comparable(value: Optional[SlotValue]) -> Optional[tuple[str, Optional[str]]]:
    """Comparison key; requested collapses to absent, mirroring states_equal."""
    if value is None or value.kind == "requested":
        return None
    return (value.kind, value.text)


def values_match(pred: Optional[SlotValue], gold: Optional[SlotValue]) -> bool:
    return _comparable(pred) == _comparable(gold)


def derive_slot_class(
    dialogue: Dialogue,
    turn: Turn,
    slot: SlotName,
    variant: str = VARIANT_SINGLE,
    schema: Optional[SlotSchema] = None,
) -> SlotClass:
    """Gold class for a (turn, slot) pair.

    Precedence: absent -> none; dontcare; boolean yes/no -> true/false; value
    matches a different slot set earlier -> refer; value appears in the turn's
    user utterances -> copy_value; value appears in the current or previous
    agent utterance -> inform; otherwise copy_value.
    """
    schema = schema or default_schema()
    gold = turn.gold_cumulative.get(slot)
    if gold is None or gold.kind == "requested":
        return SlotClass.NONE
    if gold.kind == "dontcare":
        return SlotClass.DONTCARE
    assert gold.text is not None
    if schema.is_boolean(slot):
        if gold.text == "yes":
            return SlotClass.TRUE
        if gold.text == "no":
            return SlotClass.FALSE
    previous = (
        dialogue.turns[turn.index - 2].gold_cumulative if turn.index >= 2 else DialogueState()
    )
    for other_name, other_value in previous.items():
        if other_name != slot and other_value.kind == "literal" and other_value.text == gold.text:
            return SlotClass.REFER
    user_text = turn.user1
    if variant == VARIANT_MULTI and turn.user2_text:
        user_text = f"{user_text} {turn.user2_text}"
    if gold.text in user_text.lower():
        return SlotClass.COPY_VALUE
    agent_text = turn.agent
    if turn.index >= 2:
        agent_text = f"{agent_text} {dialogue.turns[turn.index - 2].agent}"
    if gold.text in agent_text.lower():
        return SlotClass.INFORM
    return SlotClass.COPY_VALUE


def slot_class_accuracies(
    rows: Sequence[AlignedTurn],
    variant: str = VARIANT_SINGLE,
    schema: Optional[SlotSchema] = None,
) -> tuple[dict[SlotClass, float], dict[SlotClass, tuple[int, int]]]:
    """Per-class accuracy plus (correct, total) counts; empty classes omitted."""
    schema = schema or default_schema()
    counts: dict[SlotClass, list[int]] = {cls: [0, 0] for cls in SlotClass}
    for row in rows:
        for slot in schema.slots_for_domains(row.dialogue.domains):
            slot_class = derive_slot_class(row.dialogue, row.turn, slot, variant, schema)
            counts[slot_class][1] += 1
            if values_match(row.pred.get(slot), row.turn.gold_cumulative.get(slot)):
                counts[slot_class][0] += 1
    accuracies = {
        cls: bucket[0] / bucket[1] for cls, bucket in counts.items() if bucket[1]
    }
    return accuracies, {cls: (b[0], b[1]) for cls, b in counts.items()}


def slot_accuracy(
    rows: Sequence[AlignedTurn], schema: Optional[SlotSchema] = None
) -> tuple[Optional[float], tuple[int, int]]:
    """Per-slot correctness over every (turn, in-domain slot) pair; absent means none."""
    schema = schema or default_schema()
    correct = total = 0
    for row in rows:
        for slot in schema.slots_for_domains(row.dialogue.domains):
            total += 1
            if values_match(row.pred.get(slot), row.turn.gold_cumulative.get(slot)):
                correct += 1
    return _fraction(correct, total), (correct, total)


@dataclass
class EvalReport:
    """Scored metrics with the denominators behind every fraction."""

    overall_jga: Optional[float]
    per_domain_jga: dict[str, float]
    class_accuracy: dict[str, float]
    slot_accuracy: Optional[float]
    counts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "overall_jga": self.overall_jga,
            "per_domain_jga": self.per_domain_jga,
            "class_accuracy": self.class_accuracy,
            "slot_accuracy": self.slot_accuracy,
            "counts": self.counts,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "EvalReport":
        return cls(
            overall_jga=payload.get("overall_jga"),
            per_domain_jga=dict(payload.get("per_domain_jga", {})),
            class_accuracy=dict(payload.get("class_accuracy", {})),
            slot_accuracy=payload.get("slot_accuracy"),
            counts=dict(payload.get("counts", {})),
            meta=dict(payload.get("meta", {})),
        )


def score(
    records: Sequence[PredictionRecord],
    dialogues: Sequence[Dialogue],
    variant: str = VARIANT_SINGLE,
    *,
    schema: Optional[SlotSchema] = None,
    with_classes: bool = True,
    on_deltas: bool = False,
    meta: Optional[dict] = None,
) -> EvalReport:
    """Full evaluation over a prediction set; raises AlignmentError on mismatch."""
    schema = schema or default_schema()
    rows = align_predictions(records, dialogues)
    jga_correct = sum(1 for row in rows if _row_correct(row, on_deltas))
    overall = _fraction(jga_correct, len(rows))
    domain_counts = _per_domain_counts(rows)
    domain_jga = {d: c / t for d, (c, t) in domain_counts.items() if t}
    sa, sa_counts = slot_accuracy(rows, schema)
    counts: dict = {
        "turns": len(rows),
        "jga_correct": jga_correct,
        "slot_pairs": list(sa_counts),
        "per_domain": {d: list(pair) for d, pair in domain_counts.items()},
    }
    class_fracs: dict[str, float] = {}
    if with_classes:
        accuracies, class_counts = slot_class_accuracies(rows, variant, schema)
        class_fracs = {cls.value: value for cls, value in accuracies.items()}
        counts["classes"] = {cls.value: list(pair) for cls, pair in class_counts.items() if pair[1]}
    return EvalReport(
        overall_jga=overall,
        per_domain_jga=domain_jga,
        class_accuracy=class_fracs,
        slot_accuracy=sa,
        counts=counts,
        meta=meta or {},
    )
