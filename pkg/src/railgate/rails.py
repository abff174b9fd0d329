"""Built-in execution rails: fact-checking entailment, hallucination
self-consistency, jailbreak input moderation, and output moderation.

Each rail renders its prompt template, asks the judge model at
temperature 0, and parses a yes/no verdict. The polarity table is fixed:
fact_check, hallucination and output_moderation allow on "yes"; the
jailbreak rail blocks on "yes". Every indeterminate or failed judgment
blocks (or flags) -- no rail ever allows on failure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

from .embeddings import ProviderError
from .llm import LLMGateway

RAIL_NAMES = ("fact_check", "hallucination", "jailbreak", "output_moderation")


@dataclass(frozen=True)
class RailVerdict:
    rail: str
    allowed: bool
    raw_judgment: str
    detail: str | None = None

    def to_dict(self) -> dict:
        return {
            "rail": self.rail,
            "allowed": self.allowed,
            "raw_judgment": self.raw_judgment,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class HallucinationConfig:
    n_samples: int = 3  # the original response plus two extra samples
    sample_temperature: float = 1.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")


def default_template(rail: str) -> str:
    return (
        resources.files("railgate")
        .joinpath(f"templates/{rail}.txt")
        .read_text(encoding="utf-8")
        .rstrip("\n")
    )


_PLACEHOLDER = re.compile(r"\{\{\s*(\w+)\s*\}\}")


def render_template(template: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise KeyError(f"template placeholder {{{{ {name} }}}} has no value")
        return str(values[name])

    return _PLACEHOLDER.sub(sub, template)


def parse_yes_no(text: str) -> str:
    """Classify a judgment as "yes", "no" or "indeterminate".

    Matching is on word boundaries after lowercasing and trimming, and
    "no" wins when both appear ("no" anywhere is a refusal signal).
    """
    lowered = text.lower().strip()
    if re.search(r"\bno\b", lowered):
        return "no"
    if re.search(r"\byes\b", lowered):
        return "yes"
    return "indeterminate"


def _judge(gateway: LLMGateway, prompt: str, state=None) -> str:
    task = gateway.make_task("rail_judgment", prompt)
    completion = gateway.complete(task)
    if state is not None:
        state.record_llm_call("rail_judgment", completion.latency_ms)
    return completion.text


def check_facts(
    gateway: LLMGateway,
    evidence: str,
    bot_response: str,
    template: str | None = None,
    state=None,
) -> RailVerdict:
    """Entailment check: is the response grounded in the evidence?

    Allowed only on a clear "yes"; indeterminate fails closed. Provider
    errors propagate (the action wrapper converts them into a failed,
    null-valued action, which the rail flow treats as blocked).
    """
    if not evidence.strip() or not bot_response.strip():
        raise ValueError("fact check requires nonempty evidence and response")
    template = template or default_template("fact_check")
    prompt = render_template(
        template, {"evidence": evidence, "bot_response": bot_response}
    )
    judgment = _judge(gateway, prompt, state)
    verdict = parse_yes_no(judgment)
    return RailVerdict(
        rail="fact_check",
        allowed=verdict == "yes",
        raw_judgment=judgment,
        detail=None if verdict != "indeterminate" else "indeterminate judgment",
    )


def check_hallucination(
    gateway: LLMGateway,
    user_prompt: str,
    bot_response: str,
    cfg: HallucinationConfig | None = None,
    template: str | None = None,
    state=None,
) -> RailVerdict:
    """Self-consistency check over resampled answers.

    n-1 extra answers are sampled at high temperature; they form the
    context and the original response is the hypothesis. Agreement
    ("yes") means consistent, so allowed; any sampling or judgment
    failure flags the response (fail closed).
    """
    cfg = cfg or HallucinationConfig()
    template = template or default_template("hallucination")
    try:
        extra = cfg.n_samples - 1
        if extra >= 2:
            samples = gateway.sample_n(user_prompt, extra)
        else:
            task = gateway.make_task("sample_response", user_prompt, stop=())
            samples = [gateway.complete(task).text]
        if state is not None:
            for _ in samples:
                state.record_llm_call("sample_response", 0)
        context = ". ".join(samples)
        prompt = render_template(
            template, {"sampled_responses": context, "bot_response": bot_response}
        )
        judgment = _judge(gateway, prompt, state)
    except ProviderError as err:
        return RailVerdict(
            rail="hallucination",
            allowed=False,
            raw_judgment="",
            detail=f"provider error: {err}",
        )
    verdict = parse_yes_no(judgment)
    return RailVerdict(
        rail="hallucination",
        allowed=verdict == "yes",
        raw_judgment=judgment,
        detail=None if verdict != "indeterminate" else "indeterminate judgment",
    )


def check_jailbreak(
    gateway: LLMGateway,
    user_input: str,
    template: str | None = None,
    state=None,
) -> RailVerdict:
    """Input moderation: flagged (not allowed) iff the judge says "yes"."""
    if not user_input.strip():
        raise ValueError("jailbreak check requires nonempty input")
    template = template or default_template("jailbreak")
    prompt = render_template(template, {"user_input": user_input})
    try:
        judgment = _judge(gateway, prompt, state)
    except ProviderError as err:
        return RailVerdict(
            rail="jailbreak", allowed=False, raw_judgment="", detail=f"provider error: {err}"
        )
    verdict = parse_yes_no(judgment)
    return RailVerdict(
        rail="jailbreak",
        allowed=verdict == "no",
        raw_judgment=judgment,
        detail=None if verdict != "indeterminate" else "indeterminate judgment",
    )


def output_moderation(
    gateway: LLMGateway,
    bot_response: str,
    template: str | None = None,
    state=None,
) -> RailVerdict:
    """Output moderation: allowed iff the judge answers "yes" (the prompt
    asks whether the output is legal, ethical and not harmful)."""
    if not bot_response.strip():
        raise ValueError("output moderation requires a nonempty response")
    template = template or default_template("output_moderation")
    prompt = render_template(template, {"bot_response": bot_response})
    try:
        judgment = _judge(gateway, prompt, state)
    except ProviderError as err:
        return RailVerdict(
            rail="output_moderation",
            allowed=False,
            raw_judgment="",
            detail=f"provider error: {err}",
        )
    verdict = parse_yes_no(judgment)
    return RailVerdict(
        rail="output_moderation",
        allowed=verdict == "yes",
        raw_judgment=judgment,
        detail=None if verdict != "indeterminate" else "indeterminate judgment",
    )
