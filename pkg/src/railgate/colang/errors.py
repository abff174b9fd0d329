"""Error and diagnostic types shared by the lexer, parser and validator."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    message: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ColangError(Exception):
    """Base for all source-level errors; carries positioned diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0]
        super().__init__(str(first))

    @classmethod
    def at(cls, message: str, line: int, column: int) -> "ColangError":
        return cls([Diagnostic("error", message, line, column)])


class LexError(ColangError):
    pass


class TabIndentationError(LexError):
    pass


class UnterminatedString(LexError):
    pass


class ParseError(ColangError):
    pass
