"""Exception hierarchy shared across the package.

Every error the CLI maps to exit code 1 derives from DuetwozError.
"""


class DuetwozError(Exception):
    """Base class for all domain errors raised by this package."""


class CategoricalViolation(DuetwozError):
    """A categorical slot received a value outside its allowed list."""

    def __init__(self, slot: str, value: str, allowed: tuple[str, ...]):
        super().__init__(f"{slot}: {value!r} not in {list(allowed)}")
        self.slot = slot
        self.value = value
        self.allowed = allowed


class FormatError(DuetwozError):
    """A corpus file does not match its declared structure."""

    def __init__(self, message: str, dialogue_id: str | None = None, json_path: str | None = None):
        detail = message
        if dialogue_id is not None:
            detail += f" (dialogue {dialogue_id}"
            detail += f", at {json_path})" if json_path else ")"
        super().__init__(detail)
        self.dialogue_id = dialogue_id
        self.json_path = json_path


class ConfigError(DuetwozError):
    """Run configuration is malformed or contains unknown keys."""


# --- llm-gateway ---

class GatewayError(DuetwozError):
    """Base class for chat-completion transport failures."""


class AuthError(GatewayError):
    """Missing or rejected provider credentials."""


class RateLimitExhausted(GatewayError):
    """Transient failures persisted through the final retry attempt."""


class ProviderError(GatewayError):
    """Non-retryable provider response; carries a body excerpt."""

    def __init__(self, message: str, status_code: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status_code = status_code
        self.body_excerpt = body_excerpt


class MockUnmatched(GatewayError):
    """Strict mock provider received a request no scripted rule matches."""


# --- act-pipeline ---

class UnparseableAct(DuetwozError):
    """The identification reply named none or several of the four act options."""


class EmptyGeneration(DuetwozError):
    """The generation reply was blank after trimming."""


class UnparseableVerdict(DuetwozError):
    """The validation reply contained neither a True nor a False token."""


# --- metrics / stats-report ---

class AlignmentError(DuetwozError):
    """Prediction and gold turn sets do not line up 1:1."""


class DomainMismatch(DuetwozError):
    """Two reports being compared cover different domain sets."""


class EmptySubset(DuetwozError):
    """A filtering step left no dialogues to evaluate."""


# --- annotate-service ---

class UnknownDialogue(DuetwozError):
    """Judgment submitted for a dialogue outside the sampled set."""


class UnknownEvaluator(DuetwozError):
    """Judgment submitted by an evaluator that never fetched a task."""
