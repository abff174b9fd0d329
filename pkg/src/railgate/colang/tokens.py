"""Token definitions for the flow-definition language."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class TokenKind(Enum):
    # Keywords
    DEFINE = "define"
    USER = "user"
    BOT = "bot"
    FLOW = "flow"
    EXECUTE = "execute"
    IF = "if"
    ELSE = "else"
    STOP = "stop"
    NOT = "not"
    AND = "and"
    OR = "or"
    TRUE = "true"
    FALSE = "false"

    # Literals and names
    IDENT = "IDENT"
    VAR = "VAR"  # $name
    STRING = "STRING"
    NUMBER = "NUMBER"

    # Punctuation
    EQUALS = "="
    EQEQ = "=="
    NEQ = "!="
    ELLIPSIS = "..."
    LPAREN = "("
    RPAREN = ")"
    COMMA = ","

    # Layout
    NEWLINE = "NEWLINE"
    INDENT = "INDENT"
    DEDENT = "DEDENT"


KEYWORDS = {
    "define": TokenKind.DEFINE,
    "user": TokenKind.USER,
    "bot": TokenKind.BOT,
    "flow": TokenKind.FLOW,
    "execute": TokenKind.EXECUTE,
    "if": TokenKind.IF,
    "else": TokenKind.ELSE,
    "stop": TokenKind.STOP,
    "not": TokenKind.NOT,
    "and": TokenKind.AND,
    "or": TokenKind.OR,
    "true": TokenKind.TRUE,
    "True": TokenKind.TRUE,
    "false": TokenKind.FALSE,
    "False": TokenKind.FALSE,
}

# Token kinds whose lexeme can serve as a plain word inside a canonical form
# or an action name ("user ask if bot can help" must stay parseable).
WORD_KINDS = frozenset(KEYWORDS.values()) | {TokenKind.IDENT}


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    line: int
    column: int

    def __repr__(self) -> str:
        return f"Token({self.kind.name}, {self.lexeme!r}, {self.line}:{self.column})"
