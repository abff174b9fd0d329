"""Canonical renderer for Script ASTs.

Two-space indentation; definitions separated by a blank line. The output
re-parses to an AST equal to the input (format is a right inverse of
parse on ASTs).
"""

from __future__ import annotations

from .ast import (
    WILDCARD,
    And,
    Assign,
    BoolLit,
    BotEmit,
    BotMessageDef,
    Eq,
    ExecuteAction,
    Expr,
    FlowDef,
    FlowElement,
    If,
    Neq,
    Not,
    NumLit,
    Or,
    Script,
    Stop,
    TextLit,
    UserMatch,
    UserMessageDef,
    VarRef,
)

_INDENT = "  "


def format_script(script: Script) -> str:
    blocks: list[str] = []
    for d in script.user_defs:
        blocks.append(_format_user_def(d))
    for d in script.bot_defs:
        blocks.append(_format_bot_def(d))
    for f in script.flows:
        blocks.append(_format_flow(f))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


def format_flow(flow: FlowDef) -> str:
    """Render a single flow block (used when embedding flows for retrieval)."""
    return _format_flow(flow) + "\n"


def _format_user_def(d: UserMessageDef) -> str:
    lines = [f"define user {d.canonical_form}"]
    lines.extend(f"{_INDENT}{_quote(e)}" for e in d.examples)
    return "\n".join(lines)


def _format_bot_def(d: BotMessageDef) -> str:
    lines = [f"define bot {d.canonical_form}"]
    lines.extend(f"{_INDENT}{_quote(u)}" for u in d.utterances)
    return "\n".join(lines)


def _format_flow(f: FlowDef) -> str:
    lines = [f"define flow {f.name}"]
    _format_elements(f.elements, 1, lines)
    return "\n".join(lines)


def _format_elements(elements: tuple[FlowElement, ...], depth: int, out: list[str]) -> None:
    pad = _INDENT * depth
    for el in elements:
        if isinstance(el, UserMatch):
            out.append(f"{pad}user {_form(el.form)}")
        elif isinstance(el, BotEmit):
            out.append(f"{pad}bot {_form(el.form)}")
        elif isinstance(el, ExecuteAction):
            call = el.action
            if el.args:
                rendered = ", ".join(f"{k}={format_expr(v)}" for k, v in el.args)
                call = f"{call}({rendered})"
            prefix = f"${el.result_var} = " if el.result_var else ""
            out.append(f"{pad}{prefix}execute {call}")
        elif isinstance(el, Assign):
            out.append(f"{pad}${el.var} = {format_expr(el.expr)}")
        elif isinstance(el, If):
            out.append(f"{pad}if {format_expr(el.cond)}")
            _format_elements(el.then, depth + 1, out)
            if el.orelse:
                out.append(f"{pad}else")
                _format_elements(el.orelse, depth + 1, out)
        elif isinstance(el, Stop):
            out.append(f"{pad}stop")
        else:  # pragma: no cover - exhaustive over FlowElement
            raise TypeError(f"unknown flow element {el!r}")


def _form(form) -> str:
    return "..." if form is WILDCARD else str(form)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


# Precedence levels; higher binds tighter.
_LEVEL_OR = 1
_LEVEL_AND = 2
_LEVEL_NOT = 3
_LEVEL_CMP = 4
_LEVEL_ATOM = 5


def format_expr(expr: Expr) -> str:
    return _render(expr, 0, left=True)


def _level(expr: Expr) -> int:
    if isinstance(expr, Or):
        return _LEVEL_OR
    if isinstance(expr, And):
        return _LEVEL_AND
    if isinstance(expr, Not):
        return _LEVEL_NOT
    if isinstance(expr, (Eq, Neq)):
        return _LEVEL_CMP
    return _LEVEL_ATOM


def _render(expr: Expr, parent_level: int, left: bool) -> str:
    level = _level(expr)
    if isinstance(expr, VarRef):
        text = f"${expr.name}"
    elif isinstance(expr, BoolLit):
        text = "True" if expr.value else "False"
    elif isinstance(expr, TextLit):
        text = _quote(expr.value)
    elif isinstance(expr, NumLit):
        text = repr(expr.value)
    elif isinstance(expr, Not):
        text = f"not {_render(expr.inner, level, left=False)}"
    elif isinstance(expr, And):
        text = f"{_render(expr.left, level, left=True)} and {_render(expr.right, level, left=False)}"
    elif isinstance(expr, Or):
        text = f"{_render(expr.left, level, left=True)} or {_render(expr.right, level, left=False)}"
    elif isinstance(expr, Eq):
        text = f"{_render(expr.left, level, left=True)} == {_render(expr.right, level, left=False)}"
    elif isinstance(expr, Neq):
        text = f"{_render(expr.left, level, left=True)} != {_render(expr.right, level, left=False)}"
    else:  # pragma: no cover
        raise TypeError(f"unknown expression {expr!r}")

    # Parenthesize when the child binds looser than its context, or when a
    # same-level node sits in right position (the grammar is left-associative
    # and comparisons do not chain).
    if level < parent_level or (level == parent_level and not left and level != _LEVEL_ATOM):
        return f"({text})"
    # A comparison operand must itself be an atom or parenthesized.
    if parent_level == _LEVEL_CMP and level < _LEVEL_ATOM:
        return f"({text})"
    return text
