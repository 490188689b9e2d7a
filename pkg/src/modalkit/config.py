"""Application config: one JSON file drives every CLI command.

Parse first, then validate everything and report all problems in one
ConfigError.  Input paths (rules, seeds, candidates, references, chat
fixtures) resolve relative to the config file so a config can travel
with its fixtures.  Output paths (the workspace) resolve against the
working directory, because the default config ships inside the package
and installs must stay read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path
import json

from .chat import ChatClientConfig
from .errors import ConfigError, InvariantViolation
from .instruct import Candidate, InstructionType, load_candidates, load_reference_lines, read_dataset
from .media import EXTENSION_FOR_MODALITY
from .meta import GENERATABLE_MODALITIES, Modality, modality_for_kind
from .pipeline import ExternalBackend, load_scripted_rules
from .projection import TrainConfig, uniform_enc_dims
from .zoo import ModelDescriptor, ModelRegistry, command_executor, mock_executor


def data_dir() -> Path:
    return Path(str(files("modalkit") / "data"))


def default_config_path() -> Path:
    return data_dir() / "default_config.json"


@dataclass
class RegistryEntry:
    name: str
    kind: str
    priority: int = 0
    backend: str = "mock"  # mock | command
    command: str | None = None


@dataclass
class InstructSettings:
    type_mix: dict[InstructionType, float]
    seeds_path: Path
    candidate_paths: dict[Modality, Path]
    references_path: Path
    seeds_per_query: int = 3
    candidates_per_query: int = 4
    references_per_query: int = 3


@dataclass
class AppConfig:
    seed: int
    workspace: Path
    registry: list[RegistryEntry]
    language_backend: str  # scripted | external
    backend_rules: Path
    train: TrainConfig
    pipeline: TrainConfig
    instruct: InstructSettings
    chat: ChatClientConfig | None
    base_dir: Path


def load_app_config(path: str | Path | None = None) -> AppConfig:
    cfg_path = Path(path) if path is not None else default_config_path()
    try:
        doc = json.loads(cfg_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {cfg_path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {cfg_path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {cfg_path} must be a JSON object")
    base = cfg_path.resolve().parent
    problems: list[str] = []

    def fail(msg: str) -> None:
        problems.append(msg)

    seed = _expect_int(doc.get("seed", 0), "seed", fail)
    workspace = Path(str(doc.get("workspace", "runs")))

    entries: list[RegistryEntry] = []
    raw_registry = doc.get("registry", [])
    if not isinstance(raw_registry, list) or not raw_registry:
        fail("registry must be a nonempty list")
        raw_registry = []
    for i, item in enumerate(raw_registry):
        if not isinstance(item, dict) or "name" not in item or "kind" not in item:
            fail(f"registry[{i}] must be an object with name and kind")
            continue
        entry = RegistryEntry(
            name=str(item["name"]),
            kind=str(item["kind"]),
            priority=_expect_int(item.get("priority", 0), f"registry[{i}].priority", fail),
            backend=str(item.get("backend", "mock")),
            command=item.get("command"),
        )
        try:
            modality_for_kind(entry.kind)
        except InvariantViolation:
            fail(f"registry[{i}].kind {entry.kind!r} is not a known generator kind")
        if entry.backend not in ("mock", "command"):
            fail(f"registry[{i}].backend must be mock or command")
        if entry.backend == "command":
            if not entry.command:
                fail(f"registry[{i}] uses the command backend but has no command")
            else:
                entry.command = str(base / entry.command)
        entries.append(entry)

    language_backend = str(doc.get("language_backend", "scripted"))
    if language_backend not in ("scripted", "external"):
        fail("language_backend must be scripted or external")
    backend_rules = base / str(doc.get("backend_rules", "rules.json"))

    train = _parse_train(doc.get("train", {}), "train", fail)
    pipeline = _parse_pipeline(doc.get("pipeline", {}), seed, fail)
    instruct = _parse_instruct(doc.get("instruct", {}), base, fail)

    chat_cfg: ChatClientConfig | None = None
    raw_chat = doc.get("chat")
    if raw_chat is not None:
        if not isinstance(raw_chat, dict):
            fail("chat must be an object or null")
        else:
            chat_cfg = ChatClientConfig(
                endpoint=str(raw_chat.get("endpoint", "")),
                model=str(raw_chat.get("model", "default")),
                auth_env=str(raw_chat.get("auth_env", "MODALKIT_API_TOKEN")),
                timeout=float(raw_chat.get("timeout", 30.0)),
                max_retries=_expect_int(raw_chat.get("max_retries", 3), "chat.max_retries", fail),
                backoff_base=float(raw_chat.get("backoff_base", 0.5)),
                mode=str(raw_chat.get("mode", "replay")),
                fixture_path=(
                    str(base / raw_chat["fixture_path"])
                    if raw_chat.get("fixture_path")
                    else None
                ),
            )
            try:
                chat_cfg.validate()
            except ConfigError as exc:
                fail(str(exc))

    if problems:
        raise ConfigError(f"config {cfg_path} is invalid:\n  " + "\n  ".join(problems))
    return AppConfig(
        seed=seed,
        workspace=workspace,
        registry=entries,
        language_backend=language_backend,
        backend_rules=backend_rules,
        train=train,
        pipeline=pipeline,
        instruct=instruct,
        chat=chat_cfg,
        base_dir=base,
    )


def _expect_int(value, label: str, fail) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        fail(f"{label} must be an integer, got {value!r}")
        return 0
    return value


def _parse_enc_dims(raw, label: str, fail) -> dict[Modality, int]:
    if isinstance(raw, int) and not isinstance(raw, bool):
        return uniform_enc_dims(raw)
    if isinstance(raw, dict):
        dims = {}
        for m in GENERATABLE_MODALITIES:
            dims[m] = _expect_int(raw.get(m.value, 0), f"{label}.{m.value}", fail)
        return dims
    fail(f"{label} must be an integer or an object keyed by modality")
    return uniform_enc_dims(1)


def _parse_train(raw, label: str, fail) -> TrainConfig:
    if not isinstance(raw, dict):
        fail(f"{label} must be an object")
        raw = {}
    cfg = TrainConfig(
        d_enc=_parse_enc_dims(raw.get("d_enc", 1024), f"{label}.d_enc", fail),
        d_llm=_expect_int(raw.get("d_llm", 4096), f"{label}.d_llm", fail),
        token_count=_expect_int(raw.get("token_count", 1), f"{label}.token_count", fail),
        bias=bool(raw.get("bias", False)),
        rank=_expect_int(raw.get("rank", 32), f"{label}.rank", fail),
        alpha=float(raw.get("alpha", 16.0)),
        learning_rate=float(raw.get("learning_rate", 0.05)),
        steps=_expect_int(raw.get("steps", 200), f"{label}.steps", fail),
        seed=_expect_int(raw.get("seed", 0), f"{label}.seed", fail),
        loss=str(raw.get("loss", "mse")),
    )
    try:
        cfg.validate()
    except Exception as exc:  # collect, do not abort: report all problems at once
        fail(f"{label}: {exc}")
    return cfg


def _parse_pipeline(raw, seed: int, fail) -> TrainConfig:
    if not isinstance(raw, dict):
        fail("pipeline must be an object")
        raw = {}
    cfg = TrainConfig(
        d_enc=_parse_enc_dims(raw.get("d_enc", 64), "pipeline.d_enc", fail),
        d_llm=_expect_int(raw.get("d_llm", 128), "pipeline.d_llm", fail),
        rank=_expect_int(raw.get("rank", 4), "pipeline.rank", fail),
        seed=seed,
    )
    try:
        cfg.validate()
    except Exception as exc:
        fail(f"pipeline: {exc}")
    return cfg


def _parse_instruct(raw, base: Path, fail) -> InstructSettings:
    if not isinstance(raw, dict):
        fail("instruct must be an object")
        raw = {}
    mix_raw = raw.get("type_mix", {t.value: w for t, w in _default_mix().items()})
    mix: dict[InstructionType, float] = {}
    if not isinstance(mix_raw, dict):
        fail("instruct.type_mix must be an object")
    else:
        for key, weight in mix_raw.items():
            try:
                mix[InstructionType(key)] = float(weight)
            except (ValueError, TypeError):
                fail(f"instruct.type_mix has a bad entry: {key!r}: {weight!r}")
    candidates_raw = raw.get("candidates", {})
    candidate_paths = {}
    if not isinstance(candidates_raw, dict):
        fail("instruct.candidates must be an object keyed by modality")
        candidates_raw = {}
    for m in GENERATABLE_MODALITIES:
        name = candidates_raw.get(m.value, f"candidates_{m.value}.txt")
        candidate_paths[m] = base / str(name)
    return InstructSettings(
        type_mix=mix or _default_mix(),
        seeds_path=base / str(raw.get("seeds", "seeds.jsonl")),
        candidate_paths=candidate_paths,
        references_path=base / str(raw.get("references", "references.txt")),
        seeds_per_query=_expect_int(raw.get("seeds_per_query", 3), "instruct.seeds_per_query", fail),
        candidates_per_query=_expect_int(
            raw.get("candidates_per_query", 4), "instruct.candidates_per_query", fail
        ),
        references_per_query=_expect_int(
            raw.get("references_per_query", 3), "instruct.references_per_query", fail
        ),
    )


def _default_mix() -> dict[InstructionType, float]:
    from .instruct import DEFAULT_TYPE_MIX

    return dict(DEFAULT_TYPE_MIX)


# --- constructors over a loaded config ---------------------------------------


def build_registry(app: AppConfig) -> ModelRegistry:
    registry = ModelRegistry()
    for entry in app.registry:
        modality = modality_for_kind(entry.kind)
        descriptor = ModelDescriptor(entry.name, entry.kind, modality, entry.priority)
        if entry.backend == "command":
            executor = command_executor(entry.command, EXTENSION_FOR_MODALITY[modality])
        else:
            executor = mock_executor(entry.kind)
        registry.register(descriptor, executor)
    return registry.finalize()


def build_language_backend(app: AppConfig, transport=None):
    if app.language_backend == "external":
        if app.chat is None:
            raise ConfigError("language_backend is external but the chat section is null")
        return ExternalBackend(app.chat, transport=transport)
    return load_scripted_rules(app.backend_rules)


def load_instruct_corpus(app: AppConfig):
    """Seeds, merged candidates, and references from the configured files."""
    seeds = read_dataset(app.instruct.seeds_path, mode="strict")
    candidates: list[Candidate] = []
    for m in GENERATABLE_MODALITIES:
        candidates.extend(load_candidates(app.instruct.candidate_paths[m], m))
    references = load_reference_lines(app.instruct.references_path)
    return seeds, candidates, references
