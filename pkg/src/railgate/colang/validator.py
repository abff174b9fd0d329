"""Semantic checks over a parsed Script.

Errors: duplicate flow names, duplicate canonical forms.
Warnings: user forms referenced by flows without any example utterances
(the generator falls back to the LLM), bot forms without a message
definition (the message will be LLM-generated), and example utterances
shared between different canonical forms.
"""

from __future__ import annotations

from .ast import BotEmit, FlowDef, FlowElement, If, Script, UserMatch, WILDCARD
from .errors import Diagnostic


def validate(script: Script) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    seen_flows: dict[str, FlowDef] = {}
    for flow in script.flows:
        if flow.name in seen_flows:
            diags.append(
                Diagnostic(
                    "error",
                    f"duplicate flow name {flow.name!r}",
                    flow.line,
                    1,
                )
            )
        else:
            seen_flows[flow.name] = flow

    seen_user_forms: dict[str, int] = {}
    for d in script.user_defs:
        if d.canonical_form in seen_user_forms:
            diags.append(
                Diagnostic(
                    "error",
                    f"duplicate user canonical form {d.canonical_form!r}",
                    d.line,
                    1,
                )
            )
        else:
            seen_user_forms[d.canonical_form] = d.line

    seen_bot_forms: dict[str, int] = {}
    for d in script.bot_defs:
        if d.canonical_form in seen_bot_forms:
            diags.append(
                Diagnostic(
                    "error",
                    f"duplicate bot canonical form {d.canonical_form!r}",
                    d.line,
                    1,
                )
            )
        else:
            seen_bot_forms[d.canonical_form] = d.line

    example_owner: dict[str, str] = {}
    for d in script.user_defs:
        for example in d.examples:
            owner = example_owner.get(example)
            if owner is None:
                example_owner[example] = d.canonical_form
            elif owner != d.canonical_form:
                diags.append(
                    Diagnostic(
                        "warning",
                        f"example {example!r} appears under both "
                        f"{owner!r} and {d.canonical_form!r}",
                        d.line,
                        1,
                    )
                )

    forms_with_examples = {
        d.canonical_form for d in script.user_defs if d.examples
    }
    for flow in script.flows:
        for el in _walk(flow.elements):
            if isinstance(el, UserMatch) and el.form is not WILDCARD:
                if el.form not in forms_with_examples:
                    diags.append(
                        Diagnostic(
                            "warning",
                            f"user form {el.form!r} has no example utterances; "
                            "intent matching will rely on LLM generalization",
                            el.line,
                            el.column,
                        )
                    )
            elif isinstance(el, BotEmit) and el.form is not WILDCARD:
                if el.form not in seen_bot_forms:
                    diags.append(
                        Diagnostic(
                            "warning",
                            f"bot form {el.form!r} has no message definition; "
                            "the utterance will be LLM-generated",
                            el.line,
                            el.column,
                        )
                    )
    return diags


def _walk(elements: tuple[FlowElement, ...]):
    for el in elements:
        yield el
        if isinstance(el, If):
            yield from _walk(el.then)
            yield from _walk(el.orelse)
