"""Lexer, parser, validator and formatter tests."""

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from railgate.colang import (
    WILDCARD,
    BotEmit,
    BotMessageDef,
    ColangError,
    ExecuteAction,
    FlowDef,
    If,
    Not,
    ParseError,
    Script,
    Stop,
    TabIndentationError,
    TokenKind,
    UnterminatedString,
    UserMatch,
    UserMessageDef,
    VarRef,
    format_script,
    parse_script,
    tokenize,
    validate,
)

CORPUS = Path(__file__).parent / "corpus"


def kinds(source: str) -> list[str]:
    return [t.kind.name for t in tokenize(source)]


class TestTokenize:
    def test_greeting_flow_stream(self):
        stream = kinds(
            "define flow greeting\n  user express greeting\n  bot express greeting"
        )
        assert stream == [
            "DEFINE", "FLOW", "IDENT", "NEWLINE",
            "INDENT",
            "USER", "IDENT", "IDENT", "NEWLINE",
            "BOT", "IDENT", "IDENT", "NEWLINE",
            "DEDENT",
        ]

    def test_empty_input(self):
        assert tokenize("") == []

    def test_assignment_with_execute(self):
        toks = tokenize("$allowed = execute check_jailbreak")
        assert [t.kind for t in toks] == [
            TokenKind.VAR, TokenKind.EQUALS, TokenKind.EXECUTE,
            TokenKind.IDENT, TokenKind.NEWLINE,
        ]
        assert toks[0].lexeme == "allowed"
        assert toks[3].lexeme == "check_jailbreak"

    def test_tab_indentation_rejected(self):
        with pytest.raises(TabIndentationError):
            tokenize("define flow x\n\tuser y")

    def test_unterminated_string(self):
        with pytest.raises(UnterminatedString) as err:
            tokenize('define user x\n  "oops')
        assert err.value.diagnostics[0].line == 2

    def test_comments_skipped(self):
        assert kinds("# only a comment\n") == []
        toks = tokenize("define flow x # trailing words\n  stop")
        assert [t.lexeme for t in toks if t.kind.name == "IDENT"] == ["x"]

    def test_crlf_normalized(self):
        assert kinds("define flow x\r\n  stop\r\n") == kinds("define flow x\n  stop\n")

    def test_every_indent_has_matching_dedent(self):
        for f in sorted((CORPUS / "valid").glob("*.co")):
            stream = kinds(f.read_text(encoding="utf-8"))
            assert stream.count("INDENT") == stream.count("DEDENT"), f.name

    def test_positions_are_one_based(self):
        toks = tokenize("define user hello")
        assert (toks[0].line, toks[0].column) == (1, 1)
        assert toks[1].column == 8


class TestParse:
    def test_fig2_style_two_flow_script(self):
        source = (CORPUS / "valid" / "02_wolfram_math.co").read_text() + "\n" + (
            CORPUS / "valid" / "03_wolfram_distance.co"
        ).read_text()
        script = parse_script(source)
        assert len(script.flows) == 2
        for flow in script.flows:
            assert isinstance(flow.elements[0], UserMatch)
            action = flow.elements[1]
            assert isinstance(action, ExecuteAction)
            assert action.action == "wolfram_alpha_request"
            assert action.result_var == "answer"
            assert isinstance(flow.elements[2], BotEmit)

    def test_user_def_examples(self):
        script = parse_script('define user express greeting\n  "Hello there!"\n  "hi"\n')
        assert script.user_defs == (
            UserMessageDef("express greeting", ("Hello there!", "hi")),
        )

    def test_wildcards(self):
        script = parse_script("define flow rail\n  user ...\n  bot ...\n")
        flow = script.flows[0]
        assert flow.elements[0].form is WILDCARD
        assert flow.elements[1].form is WILDCARD
        assert flow.is_input_rail and not flow.is_output_rail

    def test_output_rail_flag(self):
        script = parse_script("define flow rail\n  bot ...\n  stop\n")
        assert script.flows[0].is_output_rail
        assert not script.flows[0].is_input_rail

    def test_if_not_condition(self):
        script = parse_script(
            "define flow f\n  user x\n  if not $allowed\n    bot y\n    stop\n"
        )
        branch = script.flows[0].elements[1]
        assert isinstance(branch, If)
        assert branch.cond == Not(VarRef("allowed"))
        assert branch.then == (BotEmit("y"), Stop())

    def test_duplicate_examples_within_def_are_deduped(self):
        script = parse_script('define user x\n  "a"\n  "a"\n  "b"\n')
        assert script.user_defs[0].examples == ("a", "b")

    def test_error_recovery_reports_all_blocks(self):
        source = "define flow bad\n  user Oops Case\n\ndefine flow also bad\n  $x =\n"
        with pytest.raises(ParseError) as err:
            parse_script(source)
        assert len(err.value.diagnostics) == 2

    def test_diagnostic_positions(self):
        with pytest.raises(ParseError) as err:
            parse_script("define flow x\n  user Upper\n")
        diag = err.value.diagnostics[0]
        assert diag.line == 2
        assert diag.column >= 3

    def test_trailing_blank_lines_ignored(self):
        script = parse_script("define flow x\n  stop\n\n\n")
        assert len(script.flows) == 1


class TestValidate:
    def test_flows_without_bot_defs_warn_only(self):
        source = (CORPUS / "valid" / "02_wolfram_math.co").read_text()
        diags = validate(parse_script(source))
        assert all(d.severity == "warning" for d in diags)
        assert any("bot form" in d.message for d in diags)

    def test_empty_script(self):
        assert validate(Script()) == []

    def test_duplicate_flow_names_error(self):
        script = parse_script(
            "define flow greeting\n  stop\n\ndefine flow greeting\n  stop\n"
        )
        errors = [d for d in validate(script) if d.severity == "error"]
        assert len(errors) == 1
        assert "greeting" in errors[0].message

    def test_duplicate_canonical_forms_error(self):
        script = parse_script("define user hi\n  \"a\"\n\ndefine user hi\n  \"b\"\n")
        errors = [d for d in validate(script) if d.severity == "error"]
        assert len(errors) == 1

    def test_shared_example_across_forms_warns(self):
        script = parse_script(
            'define user a\n  "same text"\n\ndefine user b\n  "same text"\n'
        )
        warnings = [d for d in validate(script) if d.severity == "warning"]
        assert any("same text" in d.message for d in warnings)

    def test_form_without_examples_warns(self):
        script = parse_script("define flow f\n  user mystery intent\n  bot reply\n")
        warnings = [d for d in validate(script) if "mystery intent" in d.message]
        assert warnings and warnings[0].severity == "warning"


class TestFormat:
    def test_empty_script(self):
        assert format_script(Script()) == ""

    def test_corpus_round_trip(self):
        for f in sorted((CORPUS / "valid").glob("*.co")):
            script = parse_script(f.read_text(encoding="utf-8"), source_name=f.name)
            assert parse_script(format_script(script)) == script, f.name

    def test_nested_if_indentation(self):
        script = parse_script(
            "define flow f\n  user x\n  if $a\n    if $b\n      bot deep\n"
        )
        text = format_script(script)
        assert "  if $a\n    if $b\n      bot deep" in text

    def test_idempotent(self):
        source = (CORPUS / "valid" / "11_nested_if.co").read_text()
        once = format_script(parse_script(source))
        assert format_script(parse_script(once)) == once


class TestInvalidCorpus:
    def test_all_rejected_with_positions(self):
        files = sorted((CORPUS / "invalid").glob("*.co"))
        assert len(files) >= 10
        for f in files:
            with pytest.raises(ColangError) as err:
                parse_script(f.read_text(encoding="utf-8"), source_name=f.name)
            diag = err.value.diagnostics[0]
            assert diag.line >= 1 and diag.column >= 1, f.name


# --- property: parse/format round trip over generated scripts ----------------

_form = st.lists(
    st.sampled_from("ask tell express inform request greeting weather help name it".split()),
    min_size=1,
    max_size=4,
).map(" ".join)
_utterance = st.text(
    alphabet=st.characters(whitelist_categories=("L", "N", "P", "Zs"), max_codepoint=0x2FF),
    min_size=1,
    max_size=30,
).map(lambda s: " ".join(s.split())).filter(bool)

_expr = st.recursive(
    st.one_of(
        st.sampled_from("allowed ready done flag".split()).map(VarRef),
    ),
    lambda children: st.builds(Not, children),
    max_leaves=4,
)

_element = st.recursive(
    st.one_of(
        st.builds(UserMatch, _form),
        st.builds(BotEmit, _form),
        st.builds(Stop),
        st.builds(
            ExecuteAction,
            st.sampled_from("check_jailbreak lookup_record wolfram_alpha_request".split()),
            st.just(()),
            st.one_of(st.none(), st.sampled_from("result answer flag".split())),
        ),
    ),
    lambda children: st.builds(
        If,
        _expr,
        st.lists(children, min_size=1, max_size=3).map(tuple),
        st.lists(children, min_size=0, max_size=2).map(tuple),
    ),
    max_leaves=6,
)


@st.composite
def scripts(draw) -> Script:
    user_forms = draw(st.lists(_form, min_size=0, max_size=3, unique=True))
    user_defs = tuple(
        UserMessageDef(f, tuple(draw(st.lists(_utterance, max_size=3, unique=True))))
        for f in user_forms
    )
    bot_forms = draw(st.lists(_form, min_size=0, max_size=3, unique=True))
    bot_defs = tuple(
        BotMessageDef(f, tuple(draw(st.lists(_utterance, min_size=1, max_size=3, unique=True))))
        for f in bot_forms
    )
    flow_names = draw(st.lists(_form, min_size=0, max_size=3, unique=True))
    flows = tuple(
        FlowDef(name, tuple(draw(st.lists(_element, min_size=1, max_size=4))))
        for name in flow_names
    )
    return Script(user_defs=user_defs, bot_defs=bot_defs, flows=flows)


@given(scripts())
@settings(max_examples=60, deadline=None)
def test_random_script_round_trip(script):
    rendered = format_script(script)
    reparsed = parse_script(rendered)
    assert reparsed == script
    assert parse_script(format_script(reparsed)) == reparsed
