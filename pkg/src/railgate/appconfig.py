"""Application configuration: one directory per app, holding `config.yml`
plus any number of `.co` flow files (merged in filename order).

Enabling a rail in `config.yml` auto-injects the corresponding wildcard
flow and its refusal/warning message definition; hand-written flows and
message definitions with the same names take precedence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .actions import build_registry
from .colang import (
    BotMessageDef,
    ColangError,
    FlowDef,
    Script,
    UserMessageDef,
    parse_script,
    validate,
)
from .embeddings import HTTPEmbedder, MockEmbedder
from .index import RetrievalConfig, build_indexes
from .llm import HTTPChatLLM, LLMGateway, MockLLM, load_mock_rules
from .rails import HallucinationConfig
from .runtime import Runtime


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ModelSettings:
    kind: str  # "mock" | "http"
    name: str = ""
    endpoint: str = ""
    template: str = "default"
    rules_file: str | None = None
    temperatures: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EmbeddingSettings:
    kind: str  # "mock" | "http"
    dim: int = 64
    model: str = ""
    endpoint: str = ""


@dataclass(frozen=True)
class RailsSettings:
    jailbreak: bool = False
    output_moderation: bool = False
    fact_check: bool = False
    hallucination_enabled: bool = False
    hallucination: HallucinationConfig = field(default_factory=HallucinationConfig)
    messages: dict = field(default_factory=dict)  # canonical form -> text override
    templates: dict = field(default_factory=dict)  # rail name -> template file text


@dataclass(frozen=True)
class RailsAppConfig:
    id: str
    script: Script
    general_instructions: str
    sample_conversation: str
    model: ModelSettings
    embedding: EmbeddingSettings
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    rails: RailsSettings = field(default_factory=RailsSettings)
    knowledge_base: tuple[str, ...] | None = None
    fallback_message: str = "I'm sorry, I can't respond right now."
    fallback_intent: str = "general response"
    config_dir: str = ""


# Injected rail flows; message texts are overridable per config.
_RAIL_MESSAGE_DEFAULTS = {
    "inform cannot answer": "I'm sorry, I can't respond to that.",
    "inform answer unknown": "I'm not able to verify that answer, so I won't provide it.",
    "inform answer prone to hallucination": (
        "The previous answer may be inaccurate. Please double-check it."
    ),
}

_JAILBREAK_FLOW = """define flow check jailbreak
  user ...
  $allowed = execute check_jailbreak
  if not $allowed
    bot inform cannot answer
    stop
"""

_RETRIEVE_FLOW = """define flow retrieve relevant chunks
  user ...
  $relevant_chunks = execute retrieve_relevant_chunks
"""

_OUTPUT_MODERATION_FLOW = """define flow check output moderation
  bot ...
  $allowed = execute output_moderation
  if not $allowed
    bot inform cannot answer
    stop
"""

_FACT_CHECK_FLOW = """define flow check facts
  bot ...
  $accurate = execute check_facts
  if not $accurate
    bot inform answer unknown
    stop
"""

_HALLUCINATION_FLOW = """define flow check hallucination
  bot ...
  $consistent = execute check_hallucination
  if not $consistent
    bot inform answer prone to hallucination
"""


def load_config(dir_path: str | Path) -> RailsAppConfig:
    """Parse and validate one application directory.

    Rejects on any error-severity diagnostic; cross-file duplicate flow
    names and canonical forms name both files in the error.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise ConfigError(f"config directory not found: {dir_path}")
    config_file = dir_path / "config.yml"
    if not config_file.is_file():
        raise ConfigError(f"missing config.yml in {dir_path}")
    try:
        raw = yaml.safe_load(config_file.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{config_file}: invalid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_file}: top level must be a mapping")

    script = _load_scripts(dir_path)
    settings = _parse_settings(raw, dir_path)
    script = _inject_rails(script, settings["rails"])

    diagnostics = validate(script)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        listing = "; ".join(str(d) for d in errors)
        raise ConfigError(f"{dir_path}: invalid script: {listing}")

    return RailsAppConfig(
        id=settings["id"],
        script=script,
        general_instructions=settings["general_instructions"],
        sample_conversation=settings["sample_conversation"],
        model=settings["model"],
        embedding=settings["embedding"],
        retrieval=settings["retrieval"],
        rails=settings["rails"],
        knowledge_base=settings["knowledge_base"],
        fallback_message=settings["fallback_message"],
        config_dir=str(dir_path),
    )


def _load_scripts(dir_path: Path) -> Script:
    user_defs: list[UserMessageDef] = []
    bot_defs: list[BotMessageDef] = []
    flows: list[FlowDef] = []
    flow_files: dict[str, str] = {}
    user_form_files: dict[str, str] = {}
    bot_form_files: dict[str, str] = {}

    for co_file in sorted(dir_path.glob("*.co")):
        text = co_file.read_text(encoding="utf-8")
        try:
            parsed = parse_script(text, source_name=co_file.name)
        except ColangError as exc:
            lines = "; ".join(str(d) for d in exc.diagnostics)
            raise ConfigError(f"{co_file}: {lines}")
        for f in parsed.flows:
            if f.name in flow_files:
                raise ConfigError(
                    f"duplicate flow {f.name!r} in {co_file.name} "
                    f"(already defined in {flow_files[f.name]})"
                )
            flow_files[f.name] = co_file.name
            flows.append(f)
        for d in parsed.user_defs:
            if d.canonical_form in user_form_files:
                raise ConfigError(
                    f"duplicate user form {d.canonical_form!r} in {co_file.name} "
                    f"(already defined in {user_form_files[d.canonical_form]})"
                )
            user_form_files[d.canonical_form] = co_file.name
            user_defs.append(d)
        for d in parsed.bot_defs:
            if d.canonical_form in bot_form_files:
                raise ConfigError(
                    f"duplicate bot form {d.canonical_form!r} in {co_file.name} "
                    f"(already defined in {bot_form_files[d.canonical_form]})"
                )
            bot_form_files[d.canonical_form] = co_file.name
            bot_defs.append(d)

    return Script(
        user_defs=tuple(user_defs),
        bot_defs=tuple(bot_defs),
        flows=tuple(flows),
        source_name=dir_path.name,
    )


def _parse_settings(raw: dict, dir_path: Path) -> dict:
    app_id = raw.get("id") or dir_path.name

    model_raw = raw.get("model")
    if not isinstance(model_raw, dict) or "kind" not in model_raw:
        raise ConfigError(f"{dir_path}: config must declare model.kind (mock or http)")
    if model_raw["kind"] not in ("mock", "http"):
        raise ConfigError(f"{dir_path}: unknown model.kind {model_raw['kind']!r}")
    if model_raw["kind"] == "http" and not model_raw.get("endpoint"):
        raise ConfigError(f"{dir_path}: http model requires an endpoint")
    model = ModelSettings(
        kind=model_raw["kind"],
        name=model_raw.get("name", ""),
        endpoint=model_raw.get("endpoint", ""),
        template=model_raw.get("template", "default"),
        rules_file=model_raw.get("rules_file"),
        temperatures=dict(model_raw.get("temperatures", {})),
    )

    embed_raw = raw.get("embedding") or {"kind": "mock"}
    if embed_raw.get("kind") not in ("mock", "http"):
        raise ConfigError(f"{dir_path}: unknown embedding.kind {embed_raw.get('kind')!r}")
    if embed_raw["kind"] == "http" and not embed_raw.get("model"):
        # No default remote model: the config must always name one.
        raise ConfigError(f"{dir_path}: http embedding requires an explicit model name")
    embedding = EmbeddingSettings(
        kind=embed_raw["kind"],
        dim=int(embed_raw.get("dim", 64)),
        model=embed_raw.get("model", ""),
        endpoint=embed_raw.get("endpoint", ""),
    )

    retrieval_raw = raw.get("retrieval") or {}
    try:
        retrieval = RetrievalConfig(
            k_examples=int(retrieval_raw.get("k_examples", 5)),
            similarity_threshold=float(retrieval_raw.get("similarity_threshold", 0.6)),
            max_per_form=retrieval_raw.get("max_per_form"),
        )
    except ValueError as exc:
        raise ConfigError(f"{dir_path}: bad retrieval settings: {exc}")

    rails_raw = raw.get("rails") or {}
    hallucination_raw = rails_raw.get("hallucination") or {}
    if isinstance(hallucination_raw, bool):
        hallucination_raw = {"enabled": hallucination_raw}
    try:
        hallu_cfg = HallucinationConfig(
            n_samples=int(hallucination_raw.get("n_samples", 3)),
            sample_temperature=float(hallucination_raw.get("sample_temperature", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{dir_path}: bad hallucination settings: {exc}")

    templates = {}
    for rail, path in (rails_raw.get("templates") or {}).items():
        template_path = dir_path / path
        if not template_path.is_file():
            raise ConfigError(f"{dir_path}: rail template file not found: {path}")
        templates[rail] = template_path.read_text(encoding="utf-8").rstrip("\n")

    rails = RailsSettings(
        jailbreak=bool(rails_raw.get("jailbreak", False)),
        output_moderation=bool(rails_raw.get("output_moderation", False)),
        fact_check=bool(rails_raw.get("fact_check", False)),
        hallucination_enabled=bool(hallucination_raw.get("enabled", False)),
        hallucination=hallu_cfg,
        messages=dict(rails_raw.get("messages", {})),
        templates=templates,
    )

    kb = raw.get("knowledge_base")
    if kb is not None and (
        not isinstance(kb, list) or not all(isinstance(c, str) for c in kb)
    ):
        raise ConfigError(f"{dir_path}: knowledge_base must be a list of text chunks")

    general = raw.get("general_instructions")
    if general is None:
        general = (
            resources.files("railgate")
            .joinpath("templates/general_instructions.txt")
            .read_text(encoding="utf-8")
            .strip()
        )
    sample = raw.get("sample_conversation")
    if sample is None:
        sample = (
            resources.files("railgate")
            .joinpath("templates/sample_conversation.txt")
            .read_text(encoding="utf-8")
            .rstrip("\n")
        )

    return {
        "id": app_id,
        "model": model,
        "embedding": embedding,
        "retrieval": retrieval,
        "rails": rails,
        "knowledge_base": tuple(kb) if kb else None,
        "general_instructions": general,
        "sample_conversation": sample,
        "fallback_message": raw.get(
            "fallback_message", "I'm sorry, I can't respond right now."
        ),
    }


def _inject_rails(script: Script, rails: RailsSettings) -> Script:
    """Append the wildcard flows for enabled rails, unless overridden."""
    snippets: list[str] = []
    needed_messages: list[str] = []
    if rails.jailbreak:
        snippets.append(_JAILBREAK_FLOW)
        needed_messages.append("inform cannot answer")
    if rails.fact_check:
        snippets.append(_RETRIEVE_FLOW)
        snippets.append(_FACT_CHECK_FLOW)
        needed_messages.append("inform answer unknown")
    if rails.output_moderation:
        snippets.append(_OUTPUT_MODERATION_FLOW)
        needed_messages.append("inform cannot answer")
    if rails.hallucination_enabled:
        snippets.append(_HALLUCINATION_FLOW)
        needed_messages.append("inform answer prone to hallucination")
    if not snippets:
        return script

    existing_flows = {f.name for f in script.flows}
    existing_bot_forms = {d.canonical_form for d in script.bot_defs}

    new_flows = list(script.flows)
    for snippet in snippets:
        parsed = parse_script(snippet, source_name="<injected rail>")
        for flow in parsed.flows:
            if flow.name not in existing_flows:
                existing_flows.add(flow.name)
                new_flows.append(flow)

    new_bot_defs = list(script.bot_defs)
    for form in dict.fromkeys(needed_messages):
        if form in existing_bot_forms:
            continue
        text = rails.messages.get(form, _RAIL_MESSAGE_DEFAULTS[form])
        new_bot_defs.append(BotMessageDef(canonical_form=form, utterances=(text,)))
        existing_bot_forms.add(form)

    return Script(
        user_defs=script.user_defs,
        bot_defs=tuple(new_bot_defs),
        flows=tuple(new_flows),
        source_name=script.source_name,
    )


@dataclass
class App:
    """A loaded application: config plus its assembled runtime."""

    config: RailsAppConfig
    runtime: Runtime
    gateway: LLMGateway
    embedder: object


def build_app(
    config: RailsAppConfig,
    gateway: LLMGateway | None = None,
    embedder=None,
    extra_actions: dict | None = None,
) -> App:
    """Assemble providers, registry, indexes and runtime for a config.

    The index set is built eagerly so embedding problems surface at load
    time rather than mid-conversation.
    """
    if embedder is None:
        embedder = _make_embedder(config)
    if gateway is None:
        gateway = _make_gateway(config)

    registry = build_registry(config, gateway, embedder, extra=extra_actions)
    if config.rails.fact_check and not config.knowledge_base:
        if "retrieve_relevant_chunks" not in registry:
            raise ConfigError(
                f"{config.id}: fact_check rail needs a knowledge_base or a "
                "registered retrieval action"
            )
    indexes = build_indexes(config.script, embedder, config.retrieval)
    runtime = Runtime(config, gateway, indexes, registry)
    return App(config=config, runtime=runtime, gateway=gateway, embedder=embedder)


def load_app(
    dir_path: str | Path,
    gateway: LLMGateway | None = None,
    embedder=None,
    extra_actions: dict | None = None,
) -> App:
    return build_app(load_config(dir_path), gateway, embedder, extra_actions)


def _make_embedder(config: RailsAppConfig):
    settings = config.embedding
    if settings.kind == "mock":
        return MockEmbedder(dim=settings.dim)
    return HTTPEmbedder(settings.endpoint, settings.model, settings.dim)


def _make_gateway(config: RailsAppConfig) -> LLMGateway:
    settings = config.model
    if settings.kind == "mock":
        rules = []
        if settings.rules_file:
            rules_path = Path(config.config_dir) / settings.rules_file
            rules = load_mock_rules(rules_path)
        provider = MockLLM(rules)
    else:
        provider = HTTPChatLLM(settings.endpoint, settings.name)
    return LLMGateway(provider, temperatures=settings.temperatures)
