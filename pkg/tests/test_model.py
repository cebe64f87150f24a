"""Core domain type and operation tests."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duetwoz.errors import CategoricalViolation
from duetwoz.model import (
    DialogueState,
    SlotName,
    SlotValue,
    SpeechAct,
    User2Record,
    canonicalize_value,
    states_equal,
    update_state,
)

from .conftest import flat_state


class TestSchema:
    def test_entry_count_matches_shipped_ontology(self, schema):
        assert len(schema) == 30

    def test_categorical_entries(self, schema):
        categorical = {str(e.name) for e in schema if e.categorical}
        assert categorical == {
            "hotel-pricerange", "hotel-area", "hotel-parking", "hotel-internet",
            "hotel-type", "restaurant-pricerange", "restaurant-area", "attraction-area",
        }

    def test_resolve_tolerates_case_and_spacing(self, schema):
        assert schema.resolve("Hotel-Name") == SlotName("hotel", "name")
        assert schema.resolve("taxi-leaveat") == SlotName("taxi", "leaveAt")
        assert schema.resolve("restaurant-book people") == SlotName("restaurant", "book_people")
        assert schema.resolve("hotel-wifi") is None

    def test_boolean_slots(self, schema):
        assert schema.is_boolean(SlotName("hotel", "parking"))
        assert not schema.is_boolean(SlotName("hotel", "area"))


class TestUpdateState:
    def test_identity_on_empty_delta(self):
        prev = flat_state({"hotel-area": "north"})
        assert update_state(prev, DialogueState()) == prev

    def test_fills_empty_state(self):
        delta = flat_state({"restaurant-food": "mediterranean"})
        assert update_state(DialogueState(), delta) == delta

    def test_delta_wins_on_collision(self):
        prev = flat_state({"hotel-stars": "3"})
        delta = flat_state({"hotel-stars": "4", "hotel-parking": "yes"})
        merged = update_state(prev, delta)
        assert merged.to_flat() == {"hotel-parking": "yes", "hotel-stars": "4"}
        # inputs unmutated
        assert prev.to_flat() == {"hotel-stars": "3"}
        assert delta.to_flat() == {"hotel-parking": "yes", "hotel-stars": "4"}


_slot_names = st.sampled_from(
    ["hotel-area", "hotel-stars", "restaurant-food", "train-day", "taxi-destination"]
)
_values = st.sampled_from(["north", "south", "3", "4", "mediterranean", "monday", "ely", "dontcare"])
_states = st.dictionaries(_slot_names, _values, max_size=4).map(flat_state)


class TestStateProperties:
    @given(_states, _states, _states)
    @settings(max_examples=100)
    def test_update_is_associative(self, a, b, c):
        assert update_state(update_state(a, b), c) == update_state(a, update_state(b, c))

    @given(_states, _states)
    def test_key_monotonicity(self, a, b):
        assert set(update_state(a, b).keys()) >= set(a.keys())

    @given(_states)
    def test_states_equal_reflexive(self, a):
        assert states_equal(a, a)

    @given(_states, _states)
    def test_states_equal_symmetric(self, a, b):
        assert states_equal(a, b) == states_equal(b, a)


class TestStatesEqual:
    def test_empty_states(self):
        assert states_equal(DialogueState(), DialogueState())

    def test_extra_key_breaks_equality(self):
        assert not states_equal(flat_state({"hotel-name": "warkworth house"}), DialogueState())

    def test_requested_entries_are_ignored(self):
        a = flat_state({"taxi-departure": "ely", "train-day": "?"})
        b = flat_state({"taxi-departure": "ely"})
        assert states_equal(a, b)
        assert states_equal(b, a)

    def test_brute_force_agreement_on_small_states(self):
        # enumerate all entry subsets and confirm against a naive comparator
        entries = {
            "hotel-area": "north", "hotel-parking": "yes",
            "train-day": "?", "restaurant-food": "chinese",
        }
        keys = sorted(entries)
        subsets = [
            {k: entries[k] for k in keys if mask & (1 << i)}
            for mask in range(16)
            for i, k in [(i, k) for i, k in enumerate(keys)]
        ]
        # build unique subset states
        subsets = [dict(s) for s in {tuple(sorted(s.items())) for s in subsets}]
        for left in subsets:
            for right in subsets:
                naive = {k: v for k, v in left.items() if v != "?"} == {
                    k: v for k, v in right.items() if v != "?"
                }
                assert states_equal(flat_state(left), flat_state(right)) == naive


class TestCanonicalize:
    def test_alias_table(self):
        value = canonicalize_value(SlotName("hotel", "type"), "Guesthouse")
        assert value == SlotValue.literal("guest house")

    def test_question_mark_is_requested(self):
        assert canonicalize_value(SlotName("restaurant", "area"), "?").kind == "requested"

    def test_time_already_canonical(self):
        value = canonicalize_value(SlotName("train", "leaveAt"), "9:05")
        assert value == SlotValue.literal("9:05")

    @pytest.mark.parametrize("raw,expected", [
        ("09:05", "9:05"),
        ("0905", "9:05"),
        ("1715", "17:15"),
        ("905", "9:05"),
    ])
    def test_time_forms(self, raw, expected):
        assert canonicalize_value(SlotName("train", "leaveAt"), raw).text == expected

    def test_unparseable_time_kept_verbatim(self):
        value = canonicalize_value(SlotName("train", "leaveAt"), "after lunch")
        assert value == SlotValue.literal("after lunch")

    def test_dontcare_spellings(self):
        for raw in ("dontcare", "don't care", "Dont Care"):
            assert canonicalize_value(SlotName("hotel", "area"), raw).kind == "dontcare"

    def test_whitespace_and_case_folding(self):
        value = canonicalize_value(SlotName("hotel", "name"), "  Warkworth   House ")
        assert value == SlotValue.literal("warkworth house")

    def test_categorical_violation(self):
        with pytest.raises(CategoricalViolation):
            canonicalize_value(SlotName("hotel", "area"), "downtown")

    def test_lenient_mode_keeps_verbatim(self):
        value = canonicalize_value(SlotName("hotel", "area"), "downtown", strict=False)
        assert value == SlotValue.literal("downtown")

    def test_centre_alias(self):
        value = canonicalize_value(SlotName("restaurant", "area"), "Centre of Town")
        assert value == SlotValue.literal("centre")

    def test_idempotent_on_canonical_outputs(self, schema):
        samples = [
            (SlotName("hotel", "type"), "Guesthouse"),
            (SlotName("train", "leaveAt"), "0905"),
            (SlotName("hotel", "area"), "Centre of Town"),
            (SlotName("restaurant", "food"), "Mediterranean"),
            (SlotName("hotel", "parking"), "yes"),
        ]
        for slot, raw in samples:
            once = canonicalize_value(slot, raw, schema, strict=False)
            twice = canonicalize_value(slot, once.render(), schema, strict=False)
            assert once == twice


class TestUser2Record:
    def test_present_text_requires_act(self):
        with pytest.raises(ValueError):
            User2Record(text="hello", act=SpeechAct.NONE, attempts=1)

    def test_absent_text_requires_none_act(self):
        with pytest.raises(ValueError):
            User2Record(text=None, act=SpeechAct.CONSTATIVES, attempts=3)

    def test_attempt_bounds(self):
        with pytest.raises(ValueError):
            User2Record(text="hello", act=SpeechAct.CONSTATIVES, attempts=0)
        User2Record(text=None, act=SpeechAct.NONE, attempts=0)  # unparseable-act discard

    def test_act_labels(self):
        assert SpeechAct.CONSTATIVES.label == "Constatives"
        assert SpeechAct.parse("Acknowledgments") is SpeechAct.ACKNOWLEDGMENTS
