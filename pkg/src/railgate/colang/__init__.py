"""Lexer, parser, validator and formatter for `.co` flow definitions."""

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
from .errors import (
    ColangError,
    Diagnostic,
    LexError,
    ParseError,
    TabIndentationError,
    UnterminatedString,
)
from .formatter import format_expr, format_flow, format_script
from .lexer import tokenize
from .parser import parse_script
from .tokens import Token, TokenKind
from .validator import validate

__all__ = [
    "WILDCARD",
    "And",
    "Assign",
    "BoolLit",
    "BotEmit",
    "BotMessageDef",
    "ColangError",
    "Diagnostic",
    "Eq",
    "ExecuteAction",
    "Expr",
    "FlowDef",
    "FlowElement",
    "If",
    "LexError",
    "Neq",
    "Not",
    "NumLit",
    "Or",
    "ParseError",
    "Script",
    "Stop",
    "TabIndentationError",
    "TextLit",
    "Token",
    "TokenKind",
    "UnterminatedString",
    "UserMatch",
    "UserMessageDef",
    "VarRef",
    "format_expr",
    "format_flow",
    "format_script",
    "parse_script",
    "tokenize",
    "validate",
]
