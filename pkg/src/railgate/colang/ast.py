"""AST for parsed flow-definition scripts.

All nodes are immutable. Source positions are carried for diagnostics but
excluded from equality so that structurally identical scripts compare
equal regardless of where they were parsed from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


class _WildcardType:
    """Singleton marker for the `...` match-anything form."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "..."


WILDCARD = _WildcardType()
FormSpec = Union[str, _WildcardType]


# --- Expressions -----------------------------------------------------------


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class TextLit:
    value: str


@dataclass(frozen=True)
class NumLit:
    value: float | int


@dataclass(frozen=True)
class Not:
    inner: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Eq:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neq:
    left: "Expr"
    right: "Expr"


Expr = Union[VarRef, BoolLit, TextLit, NumLit, Not, And, Or, Eq, Neq]


# --- Flow elements ---------------------------------------------------------


@dataclass(frozen=True)
class UserMatch:
    form: FormSpec
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BotEmit:
    form: FormSpec
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ExecuteAction:
    action: str  # normalized snake_case
    args: tuple[tuple[str, Expr], ...] = ()
    result_var: str | None = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple["FlowElement", ...]
    orelse: tuple["FlowElement", ...] = ()
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Stop:
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


FlowElement = Union[UserMatch, BotEmit, ExecuteAction, Assign, If, Stop]


# --- Definitions -----------------------------------------------------------


@dataclass(frozen=True)
class UserMessageDef:
    canonical_form: str
    examples: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BotMessageDef:
    canonical_form: str
    utterances: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class FlowDef:
    name: str
    elements: tuple[FlowElement, ...]
    line: int = field(default=0, compare=False)

    @property
    def is_input_rail(self) -> bool:
        first = self.elements[0] if self.elements else None
        return isinstance(first, UserMatch) and first.form is WILDCARD

    @property
    def is_output_rail(self) -> bool:
        first = self.elements[0] if self.elements else None
        return isinstance(first, BotEmit) and first.form is WILDCARD


@dataclass(frozen=True)
class Script:
    user_defs: tuple[UserMessageDef, ...] = ()
    bot_defs: tuple[BotMessageDef, ...] = ()
    flows: tuple[FlowDef, ...] = ()
    source_name: str = field(default="<string>", compare=False)

    def user_def(self, form: str) -> UserMessageDef | None:
        for d in self.user_defs:
            if d.canonical_form == form:
                return d
        return None

    def bot_def(self, form: str) -> BotMessageDef | None:
        for d in self.bot_defs:
            if d.canonical_form == form:
                return d
        return None

    def flow(self, name: str) -> FlowDef | None:
        for f in self.flows:
            if f.name == name:
                return f
        return None
