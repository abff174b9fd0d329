"""Shared fixtures: tiny offline apps wired to mock providers."""

from __future__ import annotations

from pathlib import Path

import pytest

from railgate.appconfig import (
    EmbeddingSettings,
    ModelSettings,
    RailsAppConfig,
    RailsSettings,
    _inject_rails,
    build_app,
)
from railgate.colang import parse_script
from railgate.embeddings import MockEmbedder
from railgate.llm import LLMGateway, MockLLM

CORPUS_DIR = Path(__file__).parent / "corpus"

GREETING_SOURCE = """define user express greeting
  "Hello there!"
  "hi"

define bot express greeting
  "Hello! How can I assist you today?"

define flow greeting
  user express greeting
  bot express greeting
"""


def make_config(
    source: str = GREETING_SOURCE,
    rails: RailsSettings | None = None,
    app_id: str = "test",
    **overrides,
) -> RailsAppConfig:
    script = parse_script(source)
    rails = rails or RailsSettings()
    script = _inject_rails(script, rails)
    defaults = dict(
        id=app_id,
        script=script,
        general_instructions="Below is a conversation between a helpful assistant and a user.",
        sample_conversation='user "Hello there!"\n  express greeting',
        model=ModelSettings(kind="mock"),
        embedding=EmbeddingSettings(kind="mock", dim=64),
        rails=rails,
    )
    defaults.update(overrides)
    return RailsAppConfig(**defaults)


def make_app(config: RailsAppConfig | None = None, mock: MockLLM | None = None, dim: int = 64):
    config = config or make_config()
    mock = mock or MockLLM()
    app = build_app(config, gateway=LLMGateway(mock), embedder=MockEmbedder(dim))
    return app, mock


@pytest.fixture
def greeting_app():
    mock = MockLLM()
    mock.add_rule("generate_user_intent", "Hello there!", "express greeting")
    mock.add_rule("generate_user_intent", "hi", "express greeting")
    return make_app(mock=mock)
