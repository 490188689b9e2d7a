"""Meta-response wire protocol.

A language backend answers every request with a meta-response: free text
plus an ordered list of generator invocations.  The canonical form is a
single-line JSON object:

    {"text": "...", "invocations": [{"model": "text-to-image", "prompt": "..."}]}

Strict parsing accepts only that shape.  Lenient parsing additionally
recovers the tuple-list style some models emit inside prose,

    [("text-to-image", "A photo of a cat"), ]

with one warning per recovered record, and falls back to treating the
whole input as plain text when no structure is found.  Kind strings are
checked syntactically here (text-to-<word>); whether a kind is actually
served is a registry question answered by validate_invocations.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field

from .errors import EmptyMeta, InvariantViolation, MalformedMeta, PromptTooLong

PROMPT_BYTE_CAP = 2048

MODEL_KIND_RE = re.compile(r"text-to-[a-z]+")


class Modality(enum.Enum):
    TEXT = "text"
    IMAGE = "image"
    AUDIO = "audio"
    VIDEO = "video"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


GENERATABLE_MODALITIES = (Modality.IMAGE, Modality.AUDIO, Modality.VIDEO)

KNOWN_MODEL_KINDS = tuple(f"text-to-{m.value}" for m in GENERATABLE_MODALITIES)


def kind_for_modality(modality: Modality) -> str:
    if modality is Modality.TEXT:
        raise InvariantViolation("no generator kind produces text")
    return f"text-to-{modality.value}"


def modality_for_kind(kind: str) -> Modality:
    for m in GENERATABLE_MODALITIES:
        if kind == f"text-to-{m.value}":
            return m
    raise InvariantViolation(f"not a known model kind: {kind!r}")


@dataclass(frozen=True)
class Invocation:
    """One generator call requested by the language backend."""

    model: str
    prompt: str

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.model, str) or not MODEL_KIND_RE.fullmatch(self.model):
            out.append(f"model does not look like text-to-<modality>: {self.model!r}")
        if not isinstance(self.prompt, str):
            out.append("prompt is not a string")
        else:
            n = len(self.prompt.encode("utf-8"))
            if n == 0:
                out.append("prompt is empty")
            elif n > PROMPT_BYTE_CAP:
                out.append(f"prompt is {n} bytes, cap is {PROMPT_BYTE_CAP}")
        return out


@dataclass(frozen=True)
class MetaResponse:
    """Immutable parse result: text plus ordered invocations."""

    text: str = ""
    invocations: tuple[Invocation, ...] = ()

    def is_text_only(self) -> bool:
        return not self.invocations


@dataclass(frozen=True)
class ParseDiagnostics:
    mode: str
    warnings: tuple[tuple[int, str], ...] = ()  # (byte offset, message)
    consumed_bytes: int = 0


@dataclass(frozen=True)
class ValidationIssue:
    """One invocation-level problem found by validate_invocations."""

    code: str  # UnknownModelKind | EmptyPrompt | PromptTooLong
    index: int
    message: str

    def __str__(self) -> str:
        return f"{self.code}@{self.index}: {self.message}"


def serialize_meta_response(meta: MetaResponse) -> str:
    """Canonical single-line JSON; raises InvariantViolation on a bad object."""
    problems = []
    if not isinstance(meta.text, str):
        problems.append("text is not a string")
    for i, inv in enumerate(meta.invocations):
        if not isinstance(inv, Invocation):
            problems.append(f"invocation {i} is not an Invocation")
            continue
        problems.extend(f"invocation {i}: {p}" for p in inv.violations())
    if not problems and meta.text == "" and not meta.invocations:
        problems.append("meta-response has no text and no invocations")
    if problems:
        raise InvariantViolation("; ".join(problems))
    payload = {
        "text": meta.text,
        "invocations": [{"model": v.model, "prompt": v.prompt} for v in meta.invocations],
    }
    return json.dumps(payload, separators=(",", ":"), ensure_ascii=False)


def validate_invocations(meta: MetaResponse, registry) -> list[ValidationIssue]:
    """Check every invocation against prompt bounds and the registry.

    Never raises; returns one issue per offending invocation index.  The
    registry only needs a serves_kind(kind) -> bool method.
    """
    issues: list[ValidationIssue] = []
    for i, inv in enumerate(meta.invocations):
        n = len(inv.prompt.encode("utf-8")) if isinstance(inv.prompt, str) else 0
        if n == 0:
            issues.append(ValidationIssue("EmptyPrompt", i, "prompt is empty"))
        elif n > PROMPT_BYTE_CAP:
            issues.append(
                ValidationIssue("PromptTooLong", i, f"prompt is {n} bytes, cap {PROMPT_BYTE_CAP}")
            )
        if inv.model not in KNOWN_MODEL_KINDS or not registry.serves_kind(inv.model):
            issues.append(
                ValidationIssue("UnknownModelKind", i, f"no backend serves {inv.model!r}")
            )
    return issues


# --- parsing ---------------------------------------------------------------


def parse_meta_response(raw: str, mode: str = "strict") -> tuple[MetaResponse, ParseDiagnostics]:
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode: {mode!r}")
    if mode == "strict":
        meta = _parse_strict(raw)
        return meta, ParseDiagnostics("strict", (), _blen(raw))
    return _parse_lenient(raw)


def _blen(s: str) -> int:
    return len(s.encode("utf-8"))


def _parse_strict(raw: str) -> MetaResponse:
    if raw.strip() == "":
        raise EmptyMeta("input is empty")
    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedMeta(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedMeta("top level is not a JSON object")
    if set(obj.keys()) != {"text", "invocations"}:
        raise MalformedMeta(f"keys must be exactly text and invocations, got {sorted(obj)}")
    text = obj["text"]
    if not isinstance(text, str):
        raise MalformedMeta("text is not a string")
    items = obj["invocations"]
    if not isinstance(items, list):
        raise MalformedMeta("invocations is not a list")
    invocations = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or set(item.keys()) != {"model", "prompt"}:
            raise MalformedMeta(f"invocation {i} must be an object with model and prompt")
        model, prompt = item["model"], item["prompt"]
        if not isinstance(model, str) or not MODEL_KIND_RE.fullmatch(model):
            raise MalformedMeta(f"invocation {i} model is not text-to-<modality>: {model!r}")
        if not isinstance(prompt, str):
            raise MalformedMeta(f"invocation {i} prompt is not a string")
        n = len(prompt.encode("utf-8"))
        if n == 0:
            raise MalformedMeta(f"invocation {i} prompt is empty")
        if n > PROMPT_BYTE_CAP:
            raise PromptTooLong(f"invocation {i} prompt is {n} bytes, cap {PROMPT_BYTE_CAP}")
        invocations.append(Invocation(model, prompt))
    if text == "" and not invocations:
        raise EmptyMeta("no text and no invocations")
    return MetaResponse(text, tuple(invocations))


def _parse_lenient(raw: str) -> tuple[MetaResponse, ParseDiagnostics]:
    if raw.strip() == "":
        raise EmptyMeta("input is empty")
    try:
        meta = _parse_strict(raw)
        return meta, ParseDiagnostics("lenient", (), _blen(raw))
    except (EmptyMeta, PromptTooLong):
        raise
    except MalformedMeta:
        pass

    try:
        obj = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        obj = None
    if isinstance(obj, dict):
        return _recover_json_object(raw, obj)
    return _recover_prose(raw)


def _recover_json_object(raw: str, obj: dict) -> tuple[MetaResponse, ParseDiagnostics]:
    warnings: list[tuple[int, str]] = []
    text = obj.get("text", "")
    if not isinstance(text, str):
        warnings.append((0, f"text field is not a string, dropped ({type(text).__name__})"))
        text = ""
    elif "text" not in obj:
        warnings.append((0, "text field missing, treated as empty"))
    items = obj.get("invocations")
    invocations: list[Invocation] = []
    if items is None:
        warnings.append((0, "invocations field missing, treated as empty"))
    elif not isinstance(items, list):
        warnings.append((0, "invocations field is not a list, dropped"))
    else:
        for i, item in enumerate(items):
            if not isinstance(item, dict):
                warnings.append((0, f"invocation {i} is not an object, dropped"))
                continue
            model, prompt = item.get("model"), item.get("prompt")
            if not isinstance(model, str) or not MODEL_KIND_RE.fullmatch(model):
                warnings.append((0, f"invocation {i} has no usable model kind, dropped"))
                continue
            if not isinstance(prompt, str) or prompt == "":
                warnings.append((0, f"invocation {i} has no usable prompt, dropped"))
                continue
            n = len(prompt.encode("utf-8"))
            if n > PROMPT_BYTE_CAP:
                raise PromptTooLong(f"invocation {i} prompt is {n} bytes, cap {PROMPT_BYTE_CAP}")
            if set(item.keys()) != {"model", "prompt"}:
                warnings.append((0, f"invocation {i} carries extra keys, ignored"))
            invocations.append(Invocation(model, prompt))
    extra = set(obj.keys()) - {"text", "invocations"}
    if extra:
        warnings.append((0, f"unexpected top-level keys ignored: {sorted(extra)}"))
    if text == "" and not invocations:
        raise EmptyMeta("JSON object yielded no text and no invocations")
    meta = MetaResponse(text, tuple(invocations))
    return meta, ParseDiagnostics("lenient", tuple(warnings), _blen(raw))


def _recover_prose(raw: str) -> tuple[MetaResponse, ParseDiagnostics]:
    warnings: list[tuple[int, str]] = []
    invocations: list[Invocation] = []
    pieces: list[str] = []
    cursor = 0
    for start, end, records in _scan_tuple_lists(raw):
        pieces.append(raw[cursor:start])
        cursor = end
        offset = _blen(raw[:start])
        for model, prompt in records:
            n = len(prompt.encode("utf-8"))
            if n == 0:
                warnings.append((offset, f"tuple record for {model!r} has an empty prompt, dropped"))
                continue
            if n > PROMPT_BYTE_CAP:
                raise PromptTooLong(f"recovered prompt is {n} bytes, cap {PROMPT_BYTE_CAP}")
            warnings.append((offset, f"recovered tuple-style invocation ({model!r})"))
            invocations.append(Invocation(model, prompt))
    pieces.append(raw[cursor:])
    text = "".join(pieces).strip()
    if text == "" and not invocations:
        raise EmptyMeta("input reduced to nothing after recovery")
    meta = MetaResponse(text, tuple(invocations))
    return meta, ParseDiagnostics("lenient", tuple(warnings), _blen(raw))


# A tuple list is only treated as invocations when every first element
# looks like a model kind; otherwise the span stays prose.  This keeps
# ordinary bracketed lists in model chatter intact.


def _scan_tuple_lists(raw: str):
    i = 0
    n = len(raw)
    while i < n:
        if raw[i] != "[":
            i += 1
            continue
        parsed = _parse_tuple_list(raw, i)
        if parsed is None:
            i += 1
            continue
        records, end = parsed
        if all(MODEL_KIND_RE.fullmatch(model) for model, _ in records):
            yield i, end, records
            i = end
        else:
            i += 1


def _skip_ws(s: str, i: int) -> int:
    while i < len(s) and s[i] in " \t\r\n":
        i += 1
    return i


_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t"}


def _parse_quoted(s: str, i: int) -> tuple[str, int] | None:
    if i >= len(s) or s[i] not in "'\"":
        return None
    quote = s[i]
    i += 1
    out: list[str] = []
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            out.append(_ESCAPES.get(s[i + 1], "\\" + s[i + 1]))
            i += 2
            continue
        if c == quote:
            return "".join(out), i + 1
        out.append(c)
        i += 1
    return None


def _parse_pair(s: str, i: int) -> tuple[tuple[str, str], int] | None:
    if i >= len(s) or s[i] != "(":
        return None
    i = _skip_ws(s, i + 1)
    first = _parse_quoted(s, i)
    if first is None:
        return None
    model, i = first
    i = _skip_ws(s, i)
    if i >= len(s) or s[i] != ",":
        return None
    i = _skip_ws(s, i + 1)
    second = _parse_quoted(s, i)
    if second is None:
        return None
    prompt, i = second
    i = _skip_ws(s, i)
    if i < len(s) and s[i] == ",":  # tolerate a trailing comma in the pair
        i = _skip_ws(s, i + 1)
    if i >= len(s) or s[i] != ")":
        return None
    return (model, prompt), i + 1


def _parse_tuple_list(s: str, i: int) -> tuple[list[tuple[str, str]], int] | None:
    if s[i] != "[":
        return None
    i = _skip_ws(s, i + 1)
    records: list[tuple[str, str]] = []
    while True:
        pair = _parse_pair(s, i)
        if pair is None:
            break
        record, i = pair
        records.append(record)
        i = _skip_ws(s, i)
        if i < len(s) and s[i] == ",":
            i = _skip_ws(s, i + 1)
            continue
        break
    if not records:
        return None
    if i >= len(s) or s[i] != "]":
        return None
    return records, i + 1
