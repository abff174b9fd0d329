"""Recursive-descent parser producing a Script AST.

The accepted grammar (blocks are delimited by the offside rule):

    script   := define_block*
    define_block
             := "define" "user" form NEWLINE [INDENT (STRING NEWLINE)+ DEDENT]
              | "define" "bot" form NEWLINE INDENT (STRING NEWLINE)+ DEDENT
              | "define" "flow" name NEWLINE INDENT element+ DEDENT
    element  := "user" ("..." | form) NEWLINE
              | "bot" ("..." | form) NEWLINE
              | [VAR "="] "execute" action ["(" args ")"] NEWLINE
              | VAR "=" expr NEWLINE
              | "if" expr NEWLINE INDENT element+ DEDENT
                ["else" NEWLINE INDENT element+ DEDENT]
              | "stop" NEWLINE

On an error inside a block the parser records the diagnostic and skips to
the next top-level `define`, so several errors can be reported at once;
if any were found a ParseError carrying all of them is raised.
"""

from __future__ import annotations

import re

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
from .errors import Diagnostic, ParseError
from .lexer import tokenize
from .tokens import WORD_KINDS, Token, TokenKind

_FORM_WORD = re.compile(r"^[a-z_][a-z0-9_]*$")
_ACTION_WORD = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def parse_script(source: str, source_name: str = "<string>") -> Script:
    """Parse source text into a Script.

    Raises ParseError (with one diagnostic per recovered error) on any
    syntax problem; lexer errors propagate as LexError.
    """
    tokens = tokenize(source)
    parser = _Parser(tokens, source_name)
    return parser.parse()


class _Parser:
    def __init__(self, tokens: list[Token], source_name: str):
        self.tokens = tokens
        self.pos = 0
        self.source_name = source_name
        self.diagnostics: list[Diagnostic] = []

    # -- token helpers ----------------------------------------------------

    def _peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _at(self, *kinds: TokenKind) -> bool:
        tok = self._peek()
        return tok is not None and tok.kind in kinds

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def _expect(self, kind: TokenKind, what: str) -> Token:
        tok = self._peek()
        if tok is None or tok.kind != kind:
            self._fail(f"expected {what}", tok)
        return self._advance()

    def _fail(self, message: str, tok: Token | None = None):
        if tok is None:
            tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else None
            line = last.line if last else 1
            col = last.column if last else 1
        else:
            line, col = tok.line, tok.column
        raise ParseError.at(f"{message}", line, col)

    # -- entry point ------------------------------------------------------

    def parse(self) -> Script:
        user_defs: list[UserMessageDef] = []
        bot_defs: list[BotMessageDef] = []
        flows: list[FlowDef] = []

        while self._peek() is not None:
            try:
                if not self._at(TokenKind.DEFINE):
                    self._fail("expected 'define' at top level")
                self._parse_define(user_defs, bot_defs, flows)
            except ParseError as err:
                self.diagnostics.extend(err.diagnostics)
                self._recover_to_next_define()

        if self.diagnostics:
            raise ParseError(self.diagnostics)
        return Script(
            user_defs=tuple(user_defs),
            bot_defs=tuple(bot_defs),
            flows=tuple(flows),
            source_name=self.source_name,
        )

    def _recover_to_next_define(self) -> None:
        depth = 0
        while self._peek() is not None:
            tok = self._peek()
            if tok.kind == TokenKind.INDENT:
                depth += 1
            elif tok.kind == TokenKind.DEDENT:
                depth = max(0, depth - 1)
            elif tok.kind == TokenKind.DEFINE and depth == 0:
                return
            self._advance()

    # -- definitions ------------------------------------------------------

    def _parse_define(self, user_defs, bot_defs, flows) -> None:
        define_tok = self._expect(TokenKind.DEFINE, "'define'")
        if self._at(TokenKind.USER):
            self._advance()
            form = self._parse_form_tail("canonical form")
            self._expect(TokenKind.NEWLINE, "end of line after canonical form")
            examples = self._parse_string_block(required=False)
            user_defs.append(
                UserMessageDef(form, tuple(_dedupe(examples)), line=define_tok.line)
            )
        elif self._at(TokenKind.BOT):
            self._advance()
            form = self._parse_form_tail("canonical form")
            self._expect(TokenKind.NEWLINE, "end of line after canonical form")
            utterances = self._parse_string_block(required=True)
            bot_defs.append(
                BotMessageDef(form, tuple(utterances), line=define_tok.line)
            )
        elif self._at(TokenKind.FLOW):
            self._advance()
            name = self._parse_form_tail("flow name")
            self._expect(TokenKind.NEWLINE, "end of line after flow name")
            self._expect(TokenKind.INDENT, "an indented flow body")
            elements = self._parse_elements()
            self._expect(TokenKind.DEDENT, "end of flow body")
            flows.append(FlowDef(name, tuple(elements), line=define_tok.line))
        else:
            self._fail("expected 'user', 'bot' or 'flow' after 'define'")

    def _parse_form_tail(self, what: str) -> str:
        """Consume word tokens to end of line and join them with spaces."""
        words: list[str] = []
        while self._at(*WORD_KINDS):
            tok = self._advance()
            if not _FORM_WORD.match(tok.lexeme):
                self._fail(
                    f"{what} words must be lowercase identifiers (got {tok.lexeme!r})",
                    tok,
                )
            words.append(tok.lexeme)
        if not words:
            self._fail(f"expected a {what}")
        return " ".join(words)

    def _parse_string_block(self, required: bool) -> list[str]:
        if not self._at(TokenKind.INDENT):
            if required:
                self._fail("expected at least one indented utterance")
            return []
        self._advance()
        items: list[str] = []
        while self._at(TokenKind.STRING):
            items.append(self._advance().lexeme)
            self._expect(TokenKind.NEWLINE, "end of line after string")
        if not items:
            self._fail("expected quoted utterance lines")
        self._expect(TokenKind.DEDENT, "end of definition block")
        return items

    # -- flow elements ----------------------------------------------------

    def _parse_elements(self) -> list[FlowElement]:
        elements: list[FlowElement] = []
        while not self._at(TokenKind.DEDENT) and self._peek() is not None:
            elements.append(self._parse_element())
        if not elements:
            self._fail("flow body must contain at least one element")
        return elements

    def _parse_element(self) -> FlowElement:
        tok = self._peek()
        if tok is None:
            self._fail("unexpected end of input in flow body")

        if tok.kind == TokenKind.USER:
            self._advance()
            form = self._parse_match_form()
            self._expect(TokenKind.NEWLINE, "end of line")
            return UserMatch(form, line=tok.line, column=tok.column)

        if tok.kind == TokenKind.BOT:
            self._advance()
            form = self._parse_match_form()
            self._expect(TokenKind.NEWLINE, "end of line")
            return BotEmit(form, line=tok.line, column=tok.column)

        if tok.kind == TokenKind.STOP:
            self._advance()
            self._expect(TokenKind.NEWLINE, "end of line after 'stop'")
            return Stop(line=tok.line, column=tok.column)

        if tok.kind == TokenKind.IF:
            return self._parse_if()

        if tok.kind == TokenKind.EXECUTE:
            self._advance()
            return self._parse_execute(None, tok)

        if tok.kind == TokenKind.VAR:
            var_tok = self._advance()
            self._expect(TokenKind.EQUALS, "'=' after variable")
            if self._at(TokenKind.EXECUTE):
                self._advance()
                return self._parse_execute(var_tok.lexeme, var_tok)
            expr = self._parse_expr()
            self._expect(TokenKind.NEWLINE, "end of line after expression")
            return Assign(var_tok.lexeme, expr, line=var_tok.line, column=var_tok.column)

        self._fail("expected a flow element", tok)

    def _parse_match_form(self):
        if self._at(TokenKind.ELLIPSIS):
            self._advance()
            return WILDCARD
        return self._parse_form_tail("canonical form")

    def _parse_if(self) -> If:
        if_tok = self._advance()
        cond = self._parse_expr()
        self._expect(TokenKind.NEWLINE, "end of line after condition")
        self._expect(TokenKind.INDENT, "an indented 'if' body")
        then = self._parse_elements()
        self._expect(TokenKind.DEDENT, "end of 'if' body")
        orelse: list[FlowElement] = []
        if self._at(TokenKind.ELSE):
            self._advance()
            self._expect(TokenKind.NEWLINE, "end of line after 'else'")
            self._expect(TokenKind.INDENT, "an indented 'else' body")
            orelse = self._parse_elements()
            self._expect(TokenKind.DEDENT, "end of 'else' body")
        return If(cond, tuple(then), tuple(orelse), line=if_tok.line, column=if_tok.column)

    def _parse_execute(self, result_var: str | None, anchor: Token) -> ExecuteAction:
        words: list[str] = []
        while self._at(*WORD_KINDS):
            tok = self._advance()
            if not _ACTION_WORD.match(tok.lexeme):
                self._fail(f"invalid action name word {tok.lexeme!r}", tok)
            words.append(tok.lexeme)
        if not words:
            self._fail("expected an action name after 'execute'")
        action = "_".join(words)  # "wolfram alpha request" -> wolfram_alpha_request

        args: list[tuple[str, Expr]] = []
        if self._at(TokenKind.LPAREN):
            self._advance()
            if not self._at(TokenKind.RPAREN):
                args.append(self._parse_arg())
                while self._at(TokenKind.COMMA):
                    self._advance()
                    args.append(self._parse_arg())
            self._expect(TokenKind.RPAREN, "')' after action arguments")
        self._expect(TokenKind.NEWLINE, "end of line after action")
        return ExecuteAction(
            action, tuple(args), result_var, line=anchor.line, column=anchor.column
        )

    def _parse_arg(self) -> tuple[str, Expr]:
        name_tok = self._peek()
        if not self._at(*WORD_KINDS):
            self._fail("expected an argument name")
        self._advance()
        self._expect(TokenKind.EQUALS, "'=' after argument name")
        return name_tok.lexeme, self._parse_expr()

    # -- expressions --------------------------------------------------------
    # Precedence (loosest to tightest): or, and, not, ==/!=, atoms.

    def _parse_expr(self) -> Expr:
        return self._parse_or()

    def _parse_or(self) -> Expr:
        left = self._parse_and()
        while self._at(TokenKind.OR):
            self._advance()
            left = Or(left, self._parse_and())
        return left

    def _parse_and(self) -> Expr:
        left = self._parse_not()
        while self._at(TokenKind.AND):
            self._advance()
            left = And(left, self._parse_not())
        return left

    def _parse_not(self) -> Expr:
        if self._at(TokenKind.NOT):
            self._advance()
            return Not(self._parse_not())
        return self._parse_cmp()

    def _parse_cmp(self) -> Expr:
        left = self._parse_atom()
        if self._at(TokenKind.EQEQ):
            self._advance()
            return Eq(left, self._parse_atom())
        if self._at(TokenKind.NEQ):
            self._advance()
            return Neq(left, self._parse_atom())
        return left

    def _parse_atom(self) -> Expr:
        tok = self._peek()
        if tok is None:
            self._fail("expected an expression")
        if tok.kind == TokenKind.VAR:
            self._advance()
            return VarRef(tok.lexeme)
        if tok.kind == TokenKind.TRUE:
            self._advance()
            return BoolLit(True)
        if tok.kind == TokenKind.FALSE:
            self._advance()
            return BoolLit(False)
        if tok.kind == TokenKind.STRING:
            self._advance()
            return TextLit(tok.lexeme)
        if tok.kind == TokenKind.NUMBER:
            self._advance()
            text = tok.lexeme
            return NumLit(float(text) if "." in text else int(text))
        if tok.kind == TokenKind.LPAREN:
            self._advance()
            inner = self._parse_expr()
            self._expect(TokenKind.RPAREN, "')'")
            return inner
        self._fail("expected an expression", tok)


def _dedupe(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out
