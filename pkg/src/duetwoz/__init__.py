"""duetwoz: extend single-user task-oriented dialogue corpora with a
synthesized second user and measure multi-user DST robustness."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DOMAINS,
    Dialogue,
    DialogueState,
    SlotName,
    SlotSchema,
    SlotValue,
    SpeechAct,
    Turn,
    User2Record,
    canonicalize_value,
    default_schema,
    states_equal,
    update_state,
)
