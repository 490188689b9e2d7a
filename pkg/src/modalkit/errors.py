"""Exception hierarchy shared across the package.

Everything raised on purpose derives from ModalkitError so callers can
catch the whole family at a process boundary (the CLI maps them to exit
codes) without swallowing genuine bugs.
"""

from __future__ import annotations


class ModalkitError(Exception):
    """Base class for all deliberate failures."""


# --- meta-response protocol ---------------------------------------------


class MetaError(ModalkitError):
    """Base for wire-format failures."""


class MalformedMeta(MetaError):
    """Input deviates from the canonical meta-response form."""


class EmptyMeta(MetaError):
    """Parsed meta-response carries no text and no invocations."""


class PromptTooLong(MetaError):
    """An invocation prompt exceeds the byte cap."""


class InvariantViolation(MetaError):
    """In-memory object violates its own structural invariants."""


# --- model zoo -----------------------------------------------------------


class RegistryError(ModalkitError):
    pass


class DuplicateName(RegistryError):
    """A backend name was registered twice."""


class RegistryFinalized(RegistryError):
    """Mutation attempted after finalize()."""


class UnknownModelKind(ModalkitError):
    """No registered backend serves the requested model kind."""


class BackendFailure(ModalkitError):
    """A generator backend raised; carries the plan index."""

    def __init__(self, index: int, cause: str) -> None:
        super().__init__(f"backend failed at plan index {index}: {cause}")
        self.index = index
        self.cause = cause


# --- numerics ------------------------------------------------------------


class NumericsError(ModalkitError):
    pass


class ShapeMismatch(NumericsError):
    pass


class ModalityMismatch(NumericsError):
    pass


class EmptyInput(NumericsError):
    """encode was handed zero bytes."""


class BadMagic(NumericsError):
    """Embedding file does not start with the expected magic."""


class DimMismatch(NumericsError):
    """Declared embedding dimension disagrees with the payload."""


class NotNormalized(NumericsError):
    """Stored embedding is too far from unit norm to repair."""


class DivergenceDetected(NumericsError):
    """Training loss went non-finite."""


class InvalidArgument(ModalkitError):
    """A caller-supplied scalar is out of range."""


# --- instruction generation ----------------------------------------------


class InstructError(ModalkitError):
    pass


class EmptyBundle(InstructError):
    """Query bundle is missing a required section."""


class InsufficientCandidates(InstructError):
    """No candidate description available for a needed modality."""


class MalformedLine(InstructError):
    """A dataset line could not be interpreted; carries the line number."""

    def __init__(self, lineno: int, reason: str) -> None:
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class TransportError(InstructError):
    """Chat transport failed after exhausting retries."""


class FixtureMiss(InstructError):
    """Replay fixture holds no (more) responses for a request."""


# --- pipeline / config ----------------------------------------------------


class PipelineError(ModalkitError):
    pass


class InstructionRequired(PipelineError):
    """Request instruction is empty."""


class AttachmentMissing(PipelineError):
    """Request references an attachment file that does not exist."""


class ConfigError(ModalkitError):
    """Configuration failed to parse or validate."""
