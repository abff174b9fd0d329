"""Provider-agnostic LLM access.

Generation requests are typed LLMTasks carrying the task kind, assembled
prompt, sampling temperature and stop strings. The temperature policy is
fixed by default (deterministic for intent / next-step / judgments,
higher for message sampling) and overridable per application config.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import yaml

from .embeddings import ProviderError

LLM_API_KEY_ENV = "RAILGATE_LLM_API_KEY"

TASK_KINDS = (
    "generate_user_intent",
    "generate_next_step",
    "generate_bot_message",
    "rail_judgment",
    "sample_response",
)

DEFAULT_TEMPERATURES = {
    "generate_user_intent": 0.0,
    "generate_next_step": 0.0,
    "rail_judgment": 0.0,
    "generate_bot_message": 0.7,
    "sample_response": 1.0,
}

DEFAULT_MAX_TOKENS = {
    "generate_user_intent": 32,
    "generate_next_step": 32,
    "generate_bot_message": 256,
    "rail_judgment": 256,
    "sample_response": 256,
}

# Keeps the model from continuing the transcript past the completed line.
TRANSCRIPT_STOPS = ("\nuser", "\n#")


class NoMatchingRule(Exception):
    """The mock provider had no rule for a prompt; tests must fail loudly."""


class MalformedStep(Exception):
    """Next-step generation produced no parseable `bot <form>` line."""


@dataclass(frozen=True)
class LLMTask:
    kind: str
    prompt: str
    temperature: float
    stop: tuple[str, ...] = ()
    max_tokens: int = 256

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    provider_name: str
    latency_ms: int = 0
    token_counts: tuple[int, int] | None = None


@dataclass
class MockRule:
    task_kind: str
    matcher: str  # substring matched against the prompt
    response: str
    consume_once: bool = False
    _consumed: bool = field(default=False, repr=False)


class MockLLM:
    """Rule-table provider for deterministic offline runs.

    The first rule whose task kind matches and whose matcher substring
    appears in the prompt wins, in table order. Every call is recorded in
    `calls` so tests can assert on the exact call sequence.
    """

    name = "mock"

    def __init__(self, rules: list[MockRule] | None = None):
        self.rules = list(rules or [])
        self.calls: list[LLMTask] = []

    def add_rule(
        self, task_kind: str, matcher: str, response: str, consume_once: bool = False
    ) -> None:
        self.rules.append(MockRule(task_kind, matcher, response, consume_once))

    def complete(self, task: LLMTask) -> Completion:
        self.calls.append(task)
        for rule in self.rules:
            if rule._consumed:
                continue
            if rule.task_kind == task.kind and rule.matcher in task.prompt:
                if rule.consume_once:
                    rule._consumed = True
                return Completion(text=rule.response, provider_name=self.name)
        raise NoMatchingRule(
            f"no mock rule for kind={task.kind!r}; prompt starts "
            f"{task.prompt[:80]!r}"
        )

    def calls_of_kind(self, kind: str) -> list[LLMTask]:
        return [c for c in self.calls if c.kind == kind]

    def reset_log(self) -> None:
        self.calls = []


def load_mock_rules(path: str | Path) -> list[MockRule]:
    """Load a mock rule table from a YAML or JSON file.

    Each entry: {task: kind, match: substring, response: text, once: bool?}
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    data = json.loads(raw) if path.suffix == ".json" else yaml.safe_load(raw)
    if not isinstance(data, list):
        raise ValueError(f"{path}: rule file must contain a list")
    rules = []
    for i, entry in enumerate(data):
        try:
            rules.append(
                MockRule(
                    task_kind=entry["task"],
                    matcher=entry.get("match", ""),
                    response=entry["response"],
                    consume_once=bool(entry.get("once", False)),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: bad rule #{i}: {exc}")
    return rules


class HTTPChatLLM:
    """Chat-completions JSON client.

    Sends {model, messages, temperature, stop, max_tokens}; reads choice
    zero's message content. 429 and 5xx responses are retryable.
    """

    def __init__(self, endpoint: str, model: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.name = f"http:{model}"

    def complete(self, task: LLMTask) -> Completion:
        headers = {}
        api_key = os.environ.get(LLM_API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": task.prompt}],
            "temperature": task.temperature,
            "max_tokens": task.max_tokens,
        }
        if task.stop:
            body["stop"] = list(task.stop)
        started = time.monotonic()
        try:
            resp = httpx.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        except httpx.TimeoutException as exc:
            raise ProviderError(f"LLM request timed out: {exc}", retryable=True)
        except httpx.HTTPError as exc:
            raise ProviderError(f"LLM request failed: {exc}", retryable=True)
        latency_ms = int((time.monotonic() - started) * 1000)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"LLM endpoint returned {resp.status_code}", retryable=True)
        if resp.status_code != 200:
            raise ProviderError(f"LLM endpoint returned {resp.status_code}", retryable=False)
        payload = resp.json()
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed LLM response: {exc}", retryable=False)
        usage = payload.get("usage") or {}
        counts = None
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            counts = (usage["prompt_tokens"], usage["completion_tokens"])
        text = _apply_stops(text if text is not None else "", task.stop)
        return Completion(
            text=text, provider_name=self.name, latency_ms=latency_ms, token_counts=counts
        )


def _apply_stops(text: str, stops: tuple[str, ...]) -> str:
    for stop in stops:
        idx = text.find(stop)
        if idx != -1:
            text = text[:idx]
    return text


class LLMGateway:
    """Shareable front door to a provider: task construction, one retry on
    retryable failures, and ordered multi-sampling."""

    def __init__(
        self,
        provider,
        temperatures: dict[str, float] | None = None,
        max_tokens: dict[str, int] | None = None,
    ):
        self.provider = provider
        self.temperatures = {**DEFAULT_TEMPERATURES, **(temperatures or {})}
        self.max_tokens = {**DEFAULT_MAX_TOKENS, **(max_tokens or {})}

    def make_task(self, kind: str, prompt: str, stop: tuple[str, ...] | None = None) -> LLMTask:
        if stop is None:
            stop = TRANSCRIPT_STOPS if kind in (
                "generate_user_intent",
                "generate_next_step",
                "generate_bot_message",
            ) else ()
        return LLMTask(
            kind=kind,
            prompt=prompt,
            temperature=self.temperatures[kind],
            stop=tuple(stop),
            max_tokens=self.max_tokens[kind],
        )

    def complete(self, task: LLMTask) -> Completion:
        if not task.prompt:
            raise ValueError("prompt must be nonempty")
        try:
            return self.provider.complete(task)
        except ProviderError as err:
            if not err.retryable:
                raise
            return self.provider.complete(task)

    def sample_n(self, prompt: str, n: int) -> list[str]:
        """n completions at the sampling temperature, in request order.

        Any individual failure fails the whole batch (no partial results).
        """
        if n < 2:
            raise ValueError("sample_n requires n >= 2")
        task = self.make_task("sample_response", prompt, stop=())
        return [self.complete(task).text for _ in range(n)]
