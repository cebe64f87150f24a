"""Independent brute-force reference implementations used as oracles.

Everything here works over flat rendered dicts ({"hotel-area": "north"}) and
plain strings, deliberately avoiding the package's metric code paths.
"""

from __future__ import annotations

import json


def ref_drop_requested(flat: dict[str, str]) -> dict[str, str]:
    return {slot: value for slot, value in flat.items() if value != "?"}


def ref_states_equal(a: dict[str, str], b: dict[str, str]) -> bool:
    left, right = ref_drop_requested(a), ref_drop_requested(b)
    if set(left) != set(right):
        return False
    for slot in left:
        if left[slot] != right[slot]:
            return False
    return True


def ref_jga(pairs: list[tuple[dict, dict]]) -> float | None:
    """pairs of (pred_cumulative_flat, gold_cumulative_flat), one per turn."""
    if not pairs:
        return None
    hits = 0
    for pred, gold in pairs:
        if ref_states_equal(pred, gold):
            hits += 1
    return hits / len(pairs)


def _restrict(flat: dict[str, str], domain: str) -> dict[str, str]:
    return {slot: value for slot, value in flat.items() if slot.split("-", 1)[0] == domain}


def ref_per_domain_jga(rows: list[tuple[set[str], dict, dict]]) -> dict[str, float]:
    """rows of (dialogue_domains, pred_flat, gold_flat), one per turn."""
    totals: dict[str, int] = {}
    hits: dict[str, int] = {}
    for domains, pred, gold in rows:
        for domain in domains:
            totals[domain] = totals.get(domain, 0) + 1
            if ref_states_equal(_restrict(pred, domain), _restrict(gold, domain)):
                hits[domain] = hits.get(domain, 0) + 1
    return {d: hits.get(d, 0) / totals[d] for d in totals}


def ref_slot_accuracy(rows: list[tuple[list[str], dict, dict]]) -> tuple[float | None, int, int]:
    """rows of (slot_universe, pred_flat, gold_flat); requested counts as absent."""
    correct = total = 0
    for universe, pred, gold in rows:
        pred = ref_drop_requested(pred)
        gold = ref_drop_requested(gold)
        for slot in universe:
            total += 1
            if pred.get(slot) == gold.get(slot):
                correct += 1
    return (correct / total if total else None), correct, total


BOOLEAN_SLOTS = {"hotel-parking", "hotel-internet"}


def ref_slot_class(
    slot: str,
    gold_cumulative: dict[str, str],
    prev_cumulative: dict[str, str],
    user_text: str,
    agent_text: str,
) -> str:
    """Classification precedence mirrored from the written contract."""
    value = gold_cumulative.get(slot)
    if value is None or value == "?":
        return "none"
    if value == "dontcare":
        return "dontcare"
    if slot in BOOLEAN_SLOTS and value == "yes":
        return "true"
    if slot in BOOLEAN_SLOTS and value == "no":
        return "false"
    for other_slot, other_value in prev_cumulative.items():
        if other_slot != slot and other_value not in ("?", "dontcare") and other_value == value:
            return "refer"
    if value in user_text.lower():
        return "copy_value"
    if value in agent_text.lower():
        return "inform"
    return "copy_value"


def ref_class_accuracies(
    rows: list[tuple[list[str], dict, dict, dict, str, str]],
) -> dict[str, tuple[int, int]]:
    """rows of (universe, pred_flat, gold_flat, prev_gold_flat, user_text, agent_text)."""
    counts: dict[str, list[int]] = {}
    for universe, pred, gold, prev_gold, user_text, agent_text in rows:
        pred = ref_drop_requested(pred)
        gold_c = ref_drop_requested(gold)
        for slot in universe:
            slot_class = ref_slot_class(slot, gold, prev_gold, user_text, agent_text)
            bucket = counts.setdefault(slot_class, [0, 0])
            bucket[1] += 1
            if pred.get(slot) == gold_c.get(slot):
                bucket[0] += 1
    return {name: (b[0], b[1]) for name, b in counts.items()}


# --- reference JSON extractor for the parser fuzz suite ---

def _scan_balanced(raw: str, start: int) -> str | None:
    opener = raw[start]
    closer = {"{": "}", "[": "]"}[opener]
    depth = 0
    in_string = False
    escaped = False
    for index in range(start, len(raw)):
        char = raw[index]
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char in "{[":
            depth += 1
        elif char in "}]":
            depth -= 1
            if depth == 0:
                return raw[start:index + 1]
    return None


def ref_extract_json(raw: str) -> object | None:
    """First balanced JSON object/array in raw that json.loads accepts."""
    for index, char in enumerate(raw):
        if char not in "{[":
            continue
        candidate = _scan_balanced(raw, index)
        if candidate is None:
            continue
        try:
            payload = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(payload, (dict, list)):
            return payload
    return None


def ref_entries(payload: object, domains: tuple[str, ...]) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = []
    if isinstance(payload, dict):
        for key, value in payload.items():
            if isinstance(value, dict) and str(key).lower() in domains:
                for slot, nested in value.items():
                    pairs.append((f"{key}-{slot}", nested))
            else:
                pairs.append((str(key), value))
    elif isinstance(payload, list):
        for element in payload:
            if isinstance(element, dict):
                pairs.extend(ref_entries(element, domains))
            elif isinstance(element, (list, tuple)) and len(element) == 2:
                pairs.append((str(element[0]), element[1]))
    return pairs
