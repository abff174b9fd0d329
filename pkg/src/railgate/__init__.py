"""railgate: a programmable-guardrails engine for LLM conversational systems.

Flows and canonical forms are defined in `.co` files; the runtime proxies
every turn between the user and the LLM, enforcing topical flows and
safety rails (jailbreak input moderation, output moderation, fact
checking, hallucination self-consistency).
"""

from .appconfig import App, ConfigError, RailsAppConfig, build_app, load_app, load_config
from .colang import Script, format_script, parse_script, validate
from .embeddings import HTTPEmbedder, MockEmbedder, ProviderError, cosine_similarity
from .index import IndexSet, RetrievalConfig, build_indexes, knn, similarity_match
from .llm import HTTPChatLLM, LLMGateway, LLMTask, MockLLM, MockRule
from .rails import (
    HallucinationConfig,
    RailVerdict,
    check_facts,
    check_hallucination,
    check_jailbreak,
    output_moderation,
    parse_yes_no,
)
from .runtime import ActionRegistry, DialogueState, Runtime, eval_expression

__version__ = "0.1.0"

__all__ = [
    "ActionRegistry",
    "App",
    "ConfigError",
    "DialogueState",
    "HTTPChatLLM",
    "HTTPEmbedder",
    "HallucinationConfig",
    "IndexSet",
    "LLMGateway",
    "LLMTask",
    "MockEmbedder",
    "MockLLM",
    "MockRule",
    "ProviderError",
    "RailVerdict",
    "RailsAppConfig",
    "RetrievalConfig",
    "Runtime",
    "Script",
    "build_app",
    "build_indexes",
    "check_facts",
    "check_hallucination",
    "check_jailbreak",
    "cosine_similarity",
    "eval_expression",
    "format_script",
    "knn",
    "load_app",
    "load_config",
    "output_moderation",
    "parse_script",
    "parse_yes_no",
    "similarity_match",
    "validate",
]
