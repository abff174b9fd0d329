"""Prompt assembly for the three dialogue generation tasks.

Every prompt has four parts, in fixed order: general instructions, a
sample conversation in flow-transcript syntax, retrieved few-shot
examples, and the current conversation ending at the element the model
must complete. Section headers and example shapes are template data so
different models can ship different prompt variants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import yaml

from .embeddings import ProviderError  # noqa: F401  (re-exported for callers)
from .events import (
    BotIntent,
    Event,
    StartUtteranceBotAction,
    UserIntent,
    UtteranceUserActionFinished,
)
from .index import IndexedItem, knn, similarity_match
from .llm import LLMGateway, MalformedStep


@dataclass(frozen=True)
class PromptParts:
    general_instructions: str
    sample_conversation: str
    fewshot_block: str
    current_conversation: str

    def render(self) -> str:
        parts = [
            self.general_instructions,
            self.sample_conversation,
            self.fewshot_block,
            self.current_conversation,
        ]
        return "\n\n".join(p for p in parts if p)


@dataclass(frozen=True)
class PromptTemplate:
    """Named prompt layout; `default` ships, others load from YAML files."""

    name: str = "default"
    instruction_wrapper: str = '"""\n{instructions}\n"""'
    sample_header: str = "# This is how a conversation between a user and the bot can go:"
    fewshot_headers: tuple[tuple[str, str], ...] = (
        ("generate_user_intent", "# This is how the user talks:"),
        ("generate_next_step", "# These are example conversation flows:"),
        ("generate_bot_message", "# This is how the bot talks:"),
    )
    current_header: str = "# This is the current conversation between the user and the bot:"

    def fewshot_header(self, kind: str) -> str:
        return dict(self.fewshot_headers).get(kind, "")


DEFAULT_TEMPLATE = PromptTemplate()

_TEMPLATES: dict[str, PromptTemplate] = {"default": DEFAULT_TEMPLATE}


def get_template(name: str) -> PromptTemplate:
    try:
        return _TEMPLATES[name]
    except KeyError:
        raise ValueError(f"unknown prompt template {name!r}")


def load_template_file(path: str) -> PromptTemplate:
    """Load header overrides from a YAML file and register the template."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    template = DEFAULT_TEMPLATE
    if "name" in data:
        template = replace(template, name=data["name"])
    for key in ("instruction_wrapper", "sample_header", "current_header"):
        if key in data:
            template = replace(template, **{key: data[key]})
    if "fewshot_headers" in data:
        template = replace(template, fewshot_headers=tuple(data["fewshot_headers"].items()))
    _TEMPLATES[template.name] = template
    return template


# --- transcript rendering ---------------------------------------------------


def render_transcript(events: list[Event]) -> str:
    """Render conversational events in flow-transcript syntax."""
    lines: list[str] = []
    for event in events:
        if isinstance(event, UtteranceUserActionFinished):
            lines.append(f'user "{event.text}"')
        elif isinstance(event, UserIntent):
            lines.append(f"  {event.form}")
        elif isinstance(event, BotIntent):
            lines.append(f"bot {event.form}")
        elif isinstance(event, StartUtteranceBotAction):
            lines.append(f'  "{event.text}"')
    return "\n".join(lines)


def _render_fewshot(kind: str, retrieved: list[tuple[IndexedItem, float]]) -> str:
    blocks: list[str] = []
    for item, _score in retrieved:
        if item.kind == "user_example":
            blocks.append(f'user "{item.text}"\n  {item.payload}')
        elif item.kind == "bot_example":
            blocks.append(f'bot {item.payload}\n  "{item.text}"')
        else:  # flow rendering already spans several lines
            blocks.append(item.text.rstrip("\n"))
    return "\n\n".join(blocks)


def assemble_task_prompt(
    kind: str,
    config,
    state,
    retrieved: list[tuple[IndexedItem, float]],
    template: PromptTemplate | None = None,
) -> PromptParts:
    """Build the four prompt parts for one generation task.

    The current conversation ends at the element to be completed: after
    the quoted user utterance for intent generation (the model completes
    the indented canonical form), after the intent line for next-step
    generation, and after the bot intent line for message generation.
    """
    template = template or get_template(getattr(config.model, "template", "default"))

    general = ""
    if config.general_instructions:
        general = template.instruction_wrapper.format(instructions=config.general_instructions.strip())

    sample = ""
    if config.sample_conversation:
        sample = f"{template.sample_header}\n\n{config.sample_conversation.strip()}"

    fewshot = ""
    rendered_examples = _render_fewshot(kind, retrieved)
    if rendered_examples:
        fewshot = f"{template.fewshot_header(kind)}\n\n{rendered_examples}"

    transcript = render_transcript(state.history)
    current = f"{template.current_header}\n\n{transcript}\n"

    return PromptParts(general, sample, fewshot, current)


# --- generation tasks -------------------------------------------------------


def generate_user_intent(gateway: LLMGateway, state, indexes) -> tuple[str, bool]:
    """Generate the canonical form for the last user utterance.

    Nearest indexed user examples are retrieved for the few-shot block;
    the generated form is then resolved against the defined forms by
    similarity. Returns (form, matched).
    """
    config = state.config_ref
    last = _last_user_text(state)
    hits = knn(
        indexes.user_examples,
        last,
        config.retrieval.k_examples,
        indexes.provider,
    )
    parts = assemble_task_prompt("generate_user_intent", config, state, hits)
    completion = _complete(gateway, state, "generate_user_intent", parts.render())
    form = _first_nonempty_line(completion.text).lower()
    defined = defined_user_forms(config.script)
    matched = similarity_match(
        form, defined, config.retrieval.similarity_threshold, indexes.provider
    )
    if matched is not None:
        return matched, True
    return form, False


def generate_next_step(gateway: LLMGateway, state, indexes, user_intent: str) -> str:
    """Ask the model for the bot's next step when no flow matched.

    The retrieved flows give it patterns to generalize from; the output
    must be a `bot <form>` line or MalformedStep is raised.
    """
    config = state.config_ref
    hits = knn(indexes.flows, user_intent, config.retrieval.k_examples, indexes.provider)
    parts = assemble_task_prompt("generate_next_step", config, state, hits)
    completion = _complete(gateway, state, "generate_next_step", parts.render())
    line = _first_nonempty_line(completion.text)
    if not line.startswith("bot "):
        raise MalformedStep(f"expected a 'bot <form>' line, got {line!r}")
    form = line[len("bot ") :].strip().lower()
    if not form:
        raise MalformedStep("empty bot form")
    return form


def generate_bot_message(gateway: LLMGateway, state, indexes, bot_form: str) -> str:
    """Generate the utterance for a bot intent with no predefined message."""
    config = state.config_ref
    hits = knn(indexes.bot_examples, bot_form, config.retrieval.k_examples, indexes.provider)
    parts = assemble_task_prompt("generate_bot_message", config, state, hits)
    completion = _complete(gateway, state, "generate_bot_message", parts.render())
    return _unquote(completion.text.strip())


def defined_user_forms(script) -> list[str]:
    """User-def forms plus forms expected by flows, in definition order."""
    from .colang import UserMatch, WILDCARD, If

    forms: list[str] = []
    seen: set[str] = set()

    def add(form: str) -> None:
        if form not in seen:
            seen.add(form)
            forms.append(form)

    for d in script.user_defs:
        add(d.canonical_form)

    def walk(elements):
        for el in elements:
            if isinstance(el, UserMatch) and el.form is not WILDCARD:
                add(el.form)
            elif isinstance(el, If):
                walk(el.then)
                walk(el.orelse)

    for flow in script.flows:
        walk(flow.elements)
    return forms


def _complete(gateway: LLMGateway, state, kind: str, prompt: str):
    task = gateway.make_task(kind, prompt)
    completion = gateway.complete(task)
    state.record_llm_call(kind, completion.latency_ms)
    return completion


def _last_user_text(state) -> str:
    for event in reversed(state.history):
        if isinstance(event, UtteranceUserActionFinished):
            return event.text
    raise ValueError("no user utterance in history")


def _first_nonempty_line(text: str) -> str:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped:
            return stripped
    return ""


def _unquote(text: str) -> str:
    if text.startswith('"'):
        end = 1
        chars: list[str] = []
        while end < len(text):
            if text[end] == "\\" and end + 1 < len(text) and text[end + 1] in ('"', "\\"):
                chars.append(text[end + 1])
                end += 2
                continue
            if text[end] == '"':
                return "".join(chars)
            chars.append(text[end])
            end += 1
    return text
