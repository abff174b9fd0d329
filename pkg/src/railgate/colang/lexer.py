"""Offside-rule lexer for `.co` flow-definition sources.

Indentation changes produce INDENT/DEDENT tokens (two-space convention,
tabs in leading whitespace are an error). Comments run from ``#`` to end
of line. Line endings are normalized to LF before lexing.
"""

from __future__ import annotations

from .errors import LexError, TabIndentationError, UnterminatedString
from .tokens import KEYWORDS, Token, TokenKind

_PUNCT = {
    "==": TokenKind.EQEQ,
    "!=": TokenKind.NEQ,
    "=": TokenKind.EQUALS,
    "(": TokenKind.LPAREN,
    ")": TokenKind.RPAREN,
    ",": TokenKind.COMMA,
}


def _is_word_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(source: str) -> list[Token]:
    """Tokenize a complete source text.

    Returns the full token stream including layout tokens. Every opened
    INDENT is closed by a matching DEDENT before the stream ends; a
    NEWLINE is emitted at the end of every non-blank line, including a
    final line without a trailing line break.
    """
    source = source.replace("\r\n", "\n").replace("\r", "\n")
    tokens: list[Token] = []
    indents = [0]

    for line_no, raw_line in enumerate(source.split("\n"), start=1):
        # Leading whitespace: spaces only.
        col = 0
        while col < len(raw_line) and raw_line[col] in (" ", "\t"):
            if raw_line[col] == "\t":
                raise TabIndentationError.at(
                    "tab character in indentation (use spaces)", line_no, col + 1
                )
            col += 1
        indent = col

        # Blank or comment-only lines carry no layout significance.
        if col >= len(raw_line) or raw_line[col] == "#":
            continue

        if indent > indents[-1]:
            indents.append(indent)
            tokens.append(Token(TokenKind.INDENT, "", line_no, 1))
        else:
            while indent < indents[-1]:
                indents.pop()
                tokens.append(Token(TokenKind.DEDENT, "", line_no, 1))
            if indent != indents[-1]:
                raise LexError.at(
                    f"unindent does not match any outer level (got {indent} spaces)",
                    line_no,
                    1,
                )

        _lex_line(raw_line, line_no, col, tokens)
        tokens.append(Token(TokenKind.NEWLINE, "", line_no, len(raw_line) + 1))

    while len(indents) > 1:
        indents.pop()
        tokens.append(Token(TokenKind.DEDENT, "", source.count("\n") + 1, 1))
    return tokens


def _lex_line(line: str, line_no: int, start: int, out: list[Token]) -> None:
    pos = start
    n = len(line)
    while pos < n:
        ch = line[pos]
        col = pos + 1

        if ch == " ":
            pos += 1
            continue
        if ch == "\t":
            raise LexError.at("tab character in source line", line_no, col)
        if ch == "#":
            return  # comment to end of line

        if line.startswith("...", pos):
            out.append(Token(TokenKind.ELLIPSIS, "...", line_no, col))
            pos += 3
            continue

        if ch == '"':
            lexeme, pos = _lex_string(line, line_no, pos)
            out.append(Token(TokenKind.STRING, lexeme, line_no, col))
            continue

        if ch == "$":
            end = pos + 1
            while end < n and _is_word_char(line[end]):
                end += 1
            if end == pos + 1:
                raise LexError.at("expected variable name after '$'", line_no, col)
            out.append(Token(TokenKind.VAR, line[pos + 1 : end], line_no, col))
            pos = end
            continue

        if ch.isdigit():
            end = pos
            seen_dot = False
            while end < n and (line[end].isdigit() or (line[end] == "." and not seen_dot)):
                if line[end] == ".":
                    # '...' must never be eaten as part of a number
                    if line.startswith("...", end):
                        break
                    seen_dot = True
                end += 1
            out.append(Token(TokenKind.NUMBER, line[pos:end], line_no, col))
            pos = end
            continue

        if _is_word_start(ch):
            end = pos
            while end < n and _is_word_char(line[end]):
                end += 1
            word = line[pos:end]
            kind = KEYWORDS.get(word, TokenKind.IDENT)
            out.append(Token(kind, word, line_no, col))
            pos = end
            continue

        for punct, kind in _PUNCT.items():
            if line.startswith(punct, pos):
                out.append(Token(kind, punct, line_no, col))
                pos += len(punct)
                break
        else:
            raise LexError.at(f"unexpected character {ch!r}", line_no, col)


def _lex_string(line: str, line_no: int, start: int) -> tuple[str, int]:
    """Scan a double-quoted string starting at `start`; returns (value, end).

    Recognized escapes: \\" and \\\\ only.
    """
    chars: list[str] = []
    pos = start + 1
    n = len(line)
    while pos < n:
        ch = line[pos]
        if ch == '"':
            return "".join(chars), pos + 1
        if ch == "\\" and pos + 1 < n and line[pos + 1] in ('"', "\\"):
            chars.append(line[pos + 1])
            pos += 2
            continue
        chars.append(ch)
        pos += 1
    raise UnterminatedString.at("unterminated string literal", line_no, start + 1)
