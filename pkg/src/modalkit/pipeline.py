"""End-to-end request pipeline.

encode -> project -> language backend -> lenient parse -> validate ->
route -> execute.  The language backend is pluggable; the scripted one
answers from an ordered rule table so whole-system behavior is
reproducible offline.  Invocation validation failures degrade the run
to a text-only response with diagnostics; they never execute partially.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import chat
from .errors import (
    AttachmentMissing,
    ConfigError,
    InstructionRequired,
    ModalityMismatch,
    ShapeMismatch,
)
from .instruct import Attachment
from .media import modality_for_path
from .meta import Modality, parse_meta_response, validate_invocations
from .projection import (
    EmbeddingVector,
    TrainConfig,
    encode_stub,
    init_model,
    load_embedding,
    project,
    uniform_enc_dims,
)
from .zoo import FinalResponse, ModelRegistry, execute_plan, manifest_json, route


@dataclass(frozen=True)
class UserRequest:
    instruction: str
    attachments: tuple[Attachment, ...] = ()


@dataclass(frozen=True)
class ScriptedRule:
    """First match wins.  A rule with no predicates matches everything."""

    respond: str
    instruction_contains: str | None = None
    attachment_modalities: tuple[Modality, ...] | None = None

    def matches(self, instruction: str, modalities: tuple[Modality, ...]) -> bool:
        if self.instruction_contains is not None:
            if self.instruction_contains.lower() not in instruction.lower():
                return False
        if self.attachment_modalities is not None:
            present = set(modalities)
            if not all(m in present for m in self.attachment_modalities):
                return False
        return True


class ScriptedBackend:
    """Deterministic language backend driven by an ordered rule table."""

    def __init__(self, rules: list[ScriptedRule]) -> None:
        if not rules:
            raise ConfigError("scripted backend needs at least one rule")
        last = rules[-1]
        if last.instruction_contains is not None or last.attachment_modalities is not None:
            raise ConfigError("the final scripted rule must be a catch-all (no predicates)")
        self._rules = list(rules)

    def generate(self, instruction: str, modalities: tuple[Modality, ...]) -> str:
        for rule in self._rules:
            if rule.matches(instruction, modalities):
                return rule.respond
        raise AssertionError("unreachable: catch-all rule is enforced")


class ExternalBackend:
    """Language backend that defers to a chat completion endpoint."""

    def __init__(self, cfg: chat.ChatClientConfig, transport=None) -> None:
        self._cfg = cfg
        self._transport = transport or chat.build_transport(cfg)

    def generate(self, instruction: str, modalities: tuple[Modality, ...]) -> str:
        summary = ", ".join(m.value for m in modalities) or "none"
        prompt = (
            f"Attachments: {summary}\n"
            f"Instruction: {instruction}\n"
            "Reply with one JSON object: "
            '{"text": string, "invocations": [{"model": string, "prompt": string}]}'
        )
        return chat.complete(self._transport, self._cfg, prompt)


def load_scripted_rules(path: str | Path) -> ScriptedBackend:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read rules {path}: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
        raise ConfigError(f"rules file {path} must hold a rules list")
    rules = []
    for i, item in enumerate(doc["rules"]):
        if not isinstance(item, dict) or "respond" not in item:
            raise ConfigError(f"rule {i} must be an object with a respond field")
        modalities = item.get("attachment_modalities")
        if modalities is not None:
            try:
                modalities = tuple(Modality(m) for m in modalities)
            except ValueError as exc:
                raise ConfigError(f"rule {i}: {exc}") from None
        rules.append(
            ScriptedRule(
                respond=str(item["respond"]),
                instruction_contains=item.get("instruction_contains"),
                attachment_modalities=modalities,
            )
        )
    return ScriptedBackend(rules)


@dataclass
class StageRecord:
    name: str
    details: dict
    elapsed_ms: float = 0.0


@dataclass
class PipelineTrace:
    stages: list[StageRecord] = field(default_factory=list)

    def to_json(self, include_timings: bool = True) -> str:
        stages = []
        for s in self.stages:
            record = {"name": s.name, "details": s.details}
            if include_timings:
                record["elapsed_ms"] = round(s.elapsed_ms, 3)
            stages.append(record)
        return json.dumps({"stages": stages}, indent=2, ensure_ascii=False) + "\n"


def default_pipeline_config() -> TrainConfig:
    # Small dims: the pipeline only needs the projection path to be real,
    # not expensive.
    return TrainConfig(d_enc=uniform_enc_dims(64), d_llm=128, rank=4)


def _validate_request(req: UserRequest) -> None:
    if not req.instruction.strip():
        raise InstructionRequired("request instruction is empty")
    for att in req.attachments:
        if not Path(att.path).exists():
            raise AttachmentMissing(att.path)
        if att.path.endswith(".mvec"):
            continue  # checked against the stored header at encode time
        inferred = modality_for_path(att.path)
        if inferred is None:
            raise ModalityMismatch(f"{att.path}: unrecognized extension")
        if inferred is not att.modality:
            raise ModalityMismatch(
                f"{att.path}: extension says {inferred.value}, request says {att.modality.value}"
            )


def _encode_attachment(att: Attachment, cfg: TrainConfig, seed: int) -> EmbeddingVector:
    want_dim = cfg.d_enc[att.modality]
    if att.path.endswith(".mvec"):
        vec = load_embedding(att.path)
        if vec.modality is not att.modality:
            raise ModalityMismatch(
                f"{att.path}: stored modality {vec.modality.value}, request says {att.modality.value}"
            )
        if vec.dim != want_dim:
            raise ShapeMismatch(f"{att.path}: stored dim {vec.dim}, config wants {want_dim}")
        return vec
    return encode_stub(Path(att.path).read_bytes(), att.modality, want_dim, seed)


def describe_inputs(
    req: UserRequest, cfg: TrainConfig | None = None, seed: int = 0
) -> list[dict]:
    """Encode every attachment and report (path, modality, dim, norm) in order."""
    cfg = cfg or default_pipeline_config()
    _validate_request(req)
    out = []
    for att in req.attachments:
        vec = _encode_attachment(att, cfg, seed)
        out.append(
            {
                "path": att.path,
                "modality": att.modality.value,
                "dim": vec.dim,
                "norm": float((vec.values**2).sum() ** 0.5),
            }
        )
    return out


def run(
    req: UserRequest,
    registry: ModelRegistry,
    backend,
    workspace: str | Path,
    cfg: TrainConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    include_timings: bool = True,
) -> tuple[FinalResponse, PipelineTrace]:
    """Drive one request through every stage and write trace.json.

    Hard errors (empty instruction, missing attachment, empty meta)
    raise before anything is generated; invocation-validation failures
    degrade to a text-only response instead."""
    cfg = cfg or default_pipeline_config()
    _validate_request(req)  # before the workspace is even created

    ws = Path(workspace)
    ws.mkdir(parents=True, exist_ok=True)
    trace = PipelineTrace()

    def stage(name: str, fn):
        t0 = time.perf_counter()
        value, details = fn()
        trace.stages.append(StageRecord(name, details, (time.perf_counter() - t0) * 1000.0))
        return value

    stage(
        "validate",
        lambda: (
            None,
            {
                "instruction_bytes": len(req.instruction.encode("utf-8")),
                "attachments": [
                    {"path": a.path, "modality": a.modality.value} for a in req.attachments
                ],
            },
        ),
    )

    def do_encode():
        vecs = [_encode_attachment(a, cfg, seed) for a in req.attachments]
        return vecs, {"dims": [v.dim for v in vecs]}

    embeddings = stage("encode", do_encode)

    def do_project():
        model = init_model(cfg)
        tokens = [project(model.projections[v.modality], v) for v in embeddings]
        return tokens, {"token_shapes": [list(t.shape) for t in tokens]}

    stage("project", do_project)

    modalities = tuple(a.modality for a in req.attachments)
    raw = stage(
        "backend",
        lambda: (
            backend.generate(req.instruction, modalities),
            {"backend": type(backend).__name__},
        ),
    )

    def do_parse():
        meta, diags = parse_meta_response(raw, mode="lenient")
        return meta, {
            "text_bytes": len(meta.text.encode("utf-8")),
            "invocations": [{"model": v.model, "prompt": v.prompt} for v in meta.invocations],
            "warnings": [m for _, m in diags.warnings],
        }

    meta = stage("parse", do_parse)

    def do_validate():
        found = validate_invocations(meta, registry)
        return found, {"issues": [str(i) for i in found]}

    issues = stage("validate_invocations", do_validate)
    if issues:
        response = FinalResponse(
            text=meta.text, diagnostics=tuple(str(i) for i in issues)
        )
        trace.stages.append(
            StageRecord("degraded", {"reason": "invocation validation failed"}, 0.0)
        )
        (ws / "manifest.json").write_text(manifest_json(response), encoding="utf-8")
        (ws / "trace.json").write_text(trace.to_json(include_timings), encoding="utf-8")
        return response, trace

    def do_route():
        plan = route(meta, registry)
        items = [
            {"model": item.invocation.model, "backend": item.descriptor.name}
            for item in plan.items
        ]
        return plan, {"items": items}

    plan = stage("route", do_route)

    def do_execute():
        resp = execute_plan(plan, registry, ws, seed, workers=workers)
        return resp, {
            "artifacts": [a.path for a in resp.artifacts],
            "failures": [f.error for f in resp.failures],
        }

    response = stage("execute", do_execute)

    (ws / "trace.json").write_text(trace.to_json(include_timings), encoding="utf-8")
    return response, trace
