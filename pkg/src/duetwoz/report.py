"""Dataset statistics, single-vs-multi comparison tables, error-case mining,
and the clean-subset ablation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .dst import VARIANT_MULTI, VARIANT_SINGLE, PredictionRecord
from .errors import DomainMismatch, EmptySubset
from .metrics import EvalReport, align_predictions, score
from .model import DOMAINS, Dialogue, SlotSchema, states_equal

ERROR_VALUE_EXTRACTION = "value_extraction"
ERROR_SLOT_TYPE = "slot_type"


@dataclass
class CorpusStats:
    dialogue_count: int
    mean_turns: Optional[float]
    act_distribution: dict[str, float]
    mean_words: dict[str, Optional[float]]

    def to_json(self) -> dict:
        return {
            "dialogue_count": self.dialogue_count,
            "mean_turns": self.mean_turns,
            "act_distribution": self.act_distribution,
            "mean_words": self.mean_words,
        }


def _word_count(text: str) -> int:
    """Words are maximal non-whitespace runs; punctuation stays attached."""
    return len(text.split())


def corpus_stats(dialogues: Sequence[Dialogue]) -> CorpusStats:
    """Dialogue/turn counts, speech-act distribution, and mean utterance lengths.

    The act distribution covers every turn (none counted for turns without a
    user2 utterance); word means are over non-empty utterances only.
    """
    turn_total = 0
    act_counts: dict[str, int] = {}
    words = {"user1": [0, 0], "user2": [0, 0], "agent": [0, 0]}
    for dialogue in dialogues:
        for turn in dialogue.turns:
            turn_total += 1
            act = turn.act.value
            act_counts[act] = act_counts.get(act, 0) + 1
            for speaker, text in (("user1", turn.user1), ("user2", turn.user2_text or ""),
                                  ("agent", turn.agent)):
                if text:
                    words[speaker][0] += _word_count(text)
                    words[speaker][1] += 1
    distribution = {
        act: count / turn_total for act, count in sorted(act_counts.items())
    } if turn_total else {}
    mean_words = {
        speaker: (total / count if count else None)
        for speaker, (total, count) in words.items()
    }
    return CorpusStats(
        dialogue_count=len(dialogues),
        mean_turns=turn_total / len(dialogues) if dialogues else None,
        act_distribution=distribution,
        mean_words=mean_words,
    )


# --- comparison tables ---

_CLASS_COLUMNS = ("none", "dontcare", "copy_value", "true", "false", "refer", "inform")


def _pct(value: Optional[float], decimals: int = 1) -> str:
    return "-" if value is None else f"{value * 100:.{decimals}f}"


def _delta(multi: Optional[float], single: Optional[float], decimals: int = 1) -> str:
    if multi is None or single is None:
        return "-"
    return f"{(multi - single) * 100:+.{decimals}f}"


@dataclass
class ComparisonDoc:
    markdown: str
    data: dict

    def write(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.md").write_text(self.markdown, encoding="utf-8")
        (directory / "report.json").write_text(
            json.dumps(self.data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def render_comparison(single: EvalReport, multi: EvalReport, label: str = "model") -> ComparisonDoc:
    """Baseline row plus signed delta row (multi minus single), per domain and per slot class.

    Domain cells are one-decimal percentages; the average column uses two
    decimals. Raises DomainMismatch when the two reports cover different
    domain sets.
    """
    if set(single.per_domain_jga) != set(multi.per_domain_jga):
        raise DomainMismatch(
            f"single covers {sorted(single.per_domain_jga)}, multi covers {sorted(multi.per_domain_jga)}"
        )
    domains = [d for d in DOMAINS if d in single.per_domain_jga]

    def avg(report: EvalReport) -> Optional[float]:
        values = [report.per_domain_jga[d] for d in domains]
        return sum(values) / len(values) if values else None

    single_avg, multi_avg = avg(single), avg(multi)
    lines = ["# Evaluation comparison", "", "## Per-domain JGA", ""]
    header = ["Models"] + [d.capitalize() for d in domains] + ["Avg."]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    baseline = [label] + [_pct(single.per_domain_jga[d]) for d in domains] + [_pct(single_avg, 2)]
    delta_row = (["w/ user2 utterances"]
                 + [_delta(multi.per_domain_jga.get(d), single.per_domain_jga.get(d)) for d in domains]
                 + [_delta(multi_avg, single_avg, 2)])
    lines.append("| " + " | ".join(baseline) + " |")
    lines.append("| " + " | ".join(delta_row) + " |")

    lines += ["", "## Slot-level metrics", ""]
    slot_header = (["Models"]
                   + [f'"{c.capitalize()}"' for c in _CLASS_COLUMNS]
                   + ["SA", "JGA"])
    lines.append("| " + " | ".join(slot_header) + " |")
    lines.append("|" + "---|" * len(slot_header))
    slot_baseline = ([label]
                     + [_pct(single.class_accuracy.get(c)) for c in _CLASS_COLUMNS]
                     + [_pct(single.slot_accuracy), _pct(single.overall_jga, 2)])
    slot_delta = (["w/ user2 utterances"]
                  + [_delta(multi.class_accuracy.get(c), single.class_accuracy.get(c))
                     for c in _CLASS_COLUMNS]
                  + [_delta(multi.slot_accuracy, single.slot_accuracy),
                     _delta(multi.overall_jga, single.overall_jga, 2)])
    lines.append("| " + " | ".join(slot_baseline) + " |")
    lines.append("| " + " | ".join(slot_delta) + " |")
    lines.append("")

    data = {
        "label": label,
        "domains": domains,
        "jga": {
            "single": {d: single.per_domain_jga[d] for d in domains},
            "multi": {d: multi.per_domain_jga[d] for d in domains},
            "delta": {d: multi.per_domain_jga[d] - single.per_domain_jga[d] for d in domains},
            "single_avg": single_avg,
            "multi_avg": multi_avg,
        },
        "slot": {
            "single": {**single.class_accuracy, "sa": single.slot_accuracy,
                       "jga": single.overall_jga},
            "multi": {**multi.class_accuracy, "sa": multi.slot_accuracy,
                      "jga": multi.overall_jga},
        },
        "meta": {"single": single.meta, "multi": multi.meta},
    }
    return ComparisonDoc(markdown="\n".join(lines), data=data)


# --- error-case mining ---

@dataclass(frozen=True)
class ErrorCase:
    """A turn the model got right single-user but wrong multi-user."""

    dialogue_id: str
    turn_index: int
    category: str  # value_extraction | slot_type
    single_state: dict[str, str]
    multi_state: dict[str, str]
    gold_state: dict[str, str]
    user2_text: Optional[str]

    def to_json(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "category": self.category,
            "single_state": self.single_state,
            "multi_state": self.multi_state,
            "gold_state": self.gold_state,
            "user2_text": self.user2_text,
        }


def _categorize(multi_state, gold_state) -> str:
    """value_extraction when a gold slot is missed or garbled; slot_type when
    the only divergence is a spurious slot name absent from gold."""
    multi = {n: v for n, v in multi_state.items() if v.kind != "requested"}
    gold = {n: v for n, v in gold_state.items() if v.kind != "requested"}
    value_errors = any(multi.get(name) != value for name, value in gold.items())
    return ERROR_VALUE_EXTRACTION if value_errors else ERROR_SLOT_TYPE


def mine_error_cases(
    single_records: Sequence[PredictionRecord],
    multi_records: Sequence[PredictionRecord],
    dialogues: Sequence[Dialogue],
) -> list[ErrorCase]:
    """Turns where the single-user run matched gold but the multi-user run did not."""
    single_rows = {(r.dialogue.id, r.turn.index): r
                   for r in align_predictions(single_records, dialogues)}
    multi_rows = {(r.dialogue.id, r.turn.index): r
                  for r in align_predictions(multi_records, dialogues)}
    cases = []
    for key in sorted(single_rows):
        single_row, multi_row = single_rows[key], multi_rows[key]
        gold = single_row.turn.gold_cumulative
        if not states_equal(single_row.pred, gold):
            continue
        if states_equal(multi_row.pred, gold):
            continue
        cases.append(ErrorCase(
            dialogue_id=key[0],
            turn_index=key[1],
            category=_categorize(multi_row.pred, gold),
            single_state=single_row.pred.to_flat(),
            multi_state=multi_row.pred.to_flat(),
            gold_state=gold.to_flat(),
            user2_text=single_row.turn.user2_text,
        ))
    return cases


def write_error_cases(cases: Sequence[ErrorCase], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for case in cases:
            handle.write(json.dumps(case.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


# --- clean-subset ablation ---

def clean_subset_eval(
    single_records: Sequence[PredictionRecord],
    multi_records: Sequence[PredictionRecord],
    dialogues: Sequence[Dialogue],
    judgments: Iterable[tuple[str, bool]],
    *,
    schema: Optional[SlotSchema] = None,
) -> tuple[EvalReport, EvalReport]:
    """Re-score both variants on dialogues whose slot-consistency verdicts are all true.

    ``judgments`` is (dialogue_id, slot_consistent) pairs, one per judgment.
    Raises EmptySubset when no judged dialogue qualifies.
    """
    verdicts: dict[str, bool] = {}
    for dialogue_id, consistent in judgments:
        verdicts[dialogue_id] = verdicts.get(dialogue_id, True) and bool(consistent)
    clean_ids = {dialogue_id for dialogue_id, ok in verdicts.items() if ok}
    clean_dialogues = [d for d in dialogues if d.id in clean_ids]
    if not clean_dialogues:
        raise EmptySubset("no dialogue passed the slot-consistency screen")
    singles = [r for r in single_records if r.dialogue_id in clean_ids]
    multis = [r for r in multi_records if r.dialogue_id in clean_ids]
    return (
        score(singles, clean_dialogues, VARIANT_SINGLE, schema=schema,
              meta={"subset": "clean", "dialogues": len(clean_dialogues)}),
        score(multis, clean_dialogues, VARIANT_MULTI, schema=schema,
              meta={"subset": "clean", "dialogues": len(clean_dialogues)}),
    )
