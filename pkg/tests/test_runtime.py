"""Dialogue runtime: sessions, event processing, turns, replay, actions."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GREETING_SOURCE, make_app, make_config
from railgate.appconfig import RailsSettings, build_app
from railgate.colang import parse_script
from railgate.embeddings import MockEmbedder, ProviderError
from railgate.events import (
    ActionFinished,
    BotIntent,
    ContextUpdate,
    Listen,
    StartAction,
    StartUtteranceBotAction,
    UserIntent,
    UtteranceUserActionFinished,
    events_from_jsonl,
    events_to_jsonl,
)
from railgate.llm import LLMGateway, MockLLM, MockRule
from railgate.runtime import (
    EVENT_BUDGET,
    DialogueState,
    EventLoopOverflow,
    FlowStep,
    LLMFallback,
    TurnOrderError,
    UnknownAction,
    eval_expression,
    rebuild_context,
)
from railgate.colang import And, BoolLit, Eq, Neq, Not, NumLit, Or, TextLit, VarRef


class TestNewSession:
    def test_one_head_per_flow_at_index_zero(self):
        app, _ = make_app(make_config(
            "define flow a\n  user x\n  bot y\n\n"
            "define flow b\n  user z\n  bot w\n\n"
            "define flow c\n  user q\n  bot r\n"
        ))
        state = app.runtime.new_session()
        assert len(state.flow_heads) == 3
        assert all(h.element_index == 0 and h.status == "active" for h in state.flow_heads)

    def test_empty_config_zero_heads(self):
        app, _ = make_app(make_config("define user x\n  \"hi\"\n"))
        assert app.runtime.new_session().flow_heads == []

    def test_input_rail_heads_first(self):
        app, _ = make_app(make_config(
            "define flow topical\n  user x\n  bot y\n\n"
            "define flow guard\n  user ...\n  $ok = execute check_jailbreak\n",
            rails=RailsSettings(),
        ))
        state = app.runtime.new_session()
        assert state.flow_heads[0].flow_name == "guard"
        assert state.flow_heads[1].flow_name == "topical"


class TestEvalExpression:
    def test_not_unset_variable_is_true(self):
        assert eval_expression({}, Not(VarRef("allowed"))) is True

    def test_not_false_flag(self):
        assert eval_expression({"allowed": False}, Not(VarRef("allowed"))) is True
        assert eval_expression({"allowed": True}, Not(VarRef("allowed"))) is False

    def test_missing_variable_is_null(self):
        assert eval_expression({}, VarRef("x")) is None

    def test_literal_equality(self):
        assert eval_expression({}, Eq(NumLit(1), NumLit(1))) is True
        assert eval_expression({}, Neq(NumLit(1), NumLit(2))) is True

    def test_mixed_type_equality_false(self):
        assert eval_expression({}, Eq(NumLit(1), TextLit("1"))) is False
        assert eval_expression({}, Eq(BoolLit(True), NumLit(1))) is False

    def test_and_or(self):
        ctx = {"a": True, "b": False}
        assert eval_expression(ctx, And(VarRef("a"), VarRef("b"))) is False
        assert eval_expression(ctx, Or(VarRef("a"), VarRef("b"))) is True

    @given(st.one_of(st.none(), st.booleans(), st.integers(), st.text(max_size=5)))
    @settings(max_examples=30, deadline=None)
    def test_total_over_any_context_value(self, value):
        # evaluation never raises, whatever is in the context
        ctx = {"v": value}
        eval_expression(ctx, Not(VarRef("v")))
        eval_expression(ctx, Eq(VarRef("v"), VarRef("v")))
        eval_expression(ctx, And(VarRef("v"), BoolLit(True)))


class TestDecideNextStep:
    def test_flow_start_match(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        state.history.append(UtteranceUserActionFinished(text="Hello there!", seq=0))
        decision = app.runtime.decide_next_step(state, "express greeting")
        assert isinstance(decision, FlowStep)
        assert decision.flow_name == "greeting"

    def test_unmatched_intent_falls_back(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        assert isinstance(app.runtime.decide_next_step(state, "ask about weather"), LLMFallback)

    def test_tie_goes_to_first_defined_flow(self):
        app, _ = make_app(make_config(
            "define flow first\n  user same form\n  bot reply one\n\n"
            "define flow second\n  user same form\n  bot reply two\n"
        ))
        state = app.runtime.new_session()
        decision = app.runtime.decide_next_step(state, "same form")
        assert decision.flow_name == "first"

    def test_mid_flow_head_takes_priority(self):
        # one-shot rules: first intent call yields "start form", second
        # "shared form" (substring matchers would hit earlier history)
        mock = MockLLM([
            MockRule("generate_user_intent", "", "start form", consume_once=True),
            MockRule("generate_user_intent", "", "shared form", consume_once=True),
        ])
        app, _ = make_app(make_config(
            "define bot step one\n  \"one\"\n\n"
            "define bot mid reply\n  \"mid\"\n\n"
            "define bot fresh reply\n  \"fresh\"\n\n"
            "define flow multi\n  user start form\n  bot step one\n  user shared form\n  bot mid reply\n\n"
            "define flow fresh\n  user shared form\n  bot fresh reply\n"
        ), mock=mock)
        state = app.runtime.new_session()
        assert app.runtime.run_turn(state, "begin") == ["one"]
        decision = app.runtime.decide_next_step(state, "shared form")
        assert decision.flow_name == "multi"
        assert app.runtime.run_turn(state, "continue") == ["mid"]


class TestRunTurn:
    def test_greeting_turn(self, greeting_app):
        app, mock = greeting_app
        state = app.runtime.new_session()
        assert app.runtime.run_turn(state, "Hello there!") == [
            "Hello! How can I assist you today?"
        ]
        assert [c.kind for c in mock.calls] == ["generate_user_intent"]
        types = [type(e).__name__ for e in state.history]
        assert types == [
            "UtteranceUserActionFinished",
            "UserIntent",
            "BotIntent",
            "StartUtteranceBotAction",
            "Listen",
        ]

    def test_action_result_flows_into_context(self):
        mock = MockLLM([MockRule("generate_user_intent", "", "ask math question")])
        source = (
            'define user ask math question\n  "what is 6 times 7?"\n\n'
            "define flow math\n  user ask math question\n"
            "  $answer = execute wolfram_alpha_request\n"
            "  bot respond with computed answer\n\n"
            'define bot respond with computed answer\n  "Here is the result."\n'
        )
        app, _ = make_app(make_config(source), mock=mock)
        state = app.runtime.new_session()
        out = app.runtime.run_turn(state, "what is 6 times 7?")
        assert out == ["Here is the result."]
        assert state.context["answer"] == "42"
        finished = [e for e in state.history if isinstance(e, ActionFinished)]
        assert finished[0].name == "wolfram_alpha_request"
        assert finished[0].return_value == "42"
        assert finished[0].status == "success"

    def test_llm_fallback_chain(self):
        mock = MockLLM([
            MockRule("generate_user_intent", "", "ask about flight booking"),
            MockRule("generate_next_step", "", "bot offer flight booking help"),
            MockRule("generate_bot_message", "", "I can help you book flights."),
        ])
        app, _ = make_app(mock=mock)
        state = app.runtime.new_session()
        out = app.runtime.run_turn(state, "can you book me a flight?")
        assert out == ["I can help you book flights."]
        assert [c.kind for c in mock.calls] == [
            "generate_user_intent",
            "generate_next_step",
            "generate_bot_message",
        ]
        assert state.last_trace.decision == "llm_fallback"

    def test_malformed_next_step_falls_back_to_default_intent(self):
        mock = MockLLM([
            MockRule("generate_user_intent", "", "mystery intent"),
            MockRule("generate_next_step", "", "???"),
            MockRule("generate_bot_message", "", "general fallback text"),
        ])
        app, _ = make_app(mock=mock)
        state = app.runtime.new_session()
        out = app.runtime.run_turn(state, "blargh")
        assert out == ["general fallback text"]
        bot_intents = [e for e in state.history if isinstance(e, BotIntent)]
        assert bot_intents[0].form == "general response"

    def test_provider_error_yields_fallback_message(self):
        class Dead:
            name = "dead"

            def complete(self, task):
                raise ProviderError("down", retryable=False)

        config = make_config()
        app = build_app(config, gateway=LLMGateway(Dead()), embedder=MockEmbedder(64))
        state = app.runtime.new_session()
        out = app.runtime.run_turn(state, "Hello there!")
        assert out == [config.fallback_message]
        assert state.last_trace.error is not None
        assert isinstance(state.history[-1], Listen)

    def test_empty_message_rejected(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        with pytest.raises(ValueError):
            app.runtime.run_turn(state, "   ")

    def test_turn_order_enforced(self, greeting_app):
        app, mock = greeting_app
        state = app.runtime.new_session()
        state.history.append(UtteranceUserActionFinished(text="dangling", seq=0))
        with pytest.raises(TurnOrderError):
            app.runtime.run_turn(state, "Hello there!")

    def test_one_listen_per_turn(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "Hello there!")
        app.runtime.run_turn(state, "hi")
        listens = [e for e in state.history if isinstance(e, Listen)]
        assert len(listens) == 2
        assert isinstance(state.history[-1], Listen)

    def test_completed_flow_restarts_next_turn(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        assert app.runtime.run_turn(state, "Hello there!")
        assert app.runtime.run_turn(state, "hi") == [
            "Hello! How can I assist you today?"
        ]

    def test_event_budget_overflow_aborts_turn(self):
        emits = "\n".join("  bot filler reply" for _ in range(60))
        source = (
            'define user start flood\n  "flood"\n\n'
            'define bot filler reply\n  "filler"\n\n'
            f"define flow flood\n  user start flood\n{emits}\n"
        )
        mock = MockLLM([MockRule("generate_user_intent", "", "start flood")])
        config = make_config(source)
        app = build_app(config, gateway=LLMGateway(mock), embedder=MockEmbedder(64))
        state = app.runtime.new_session()
        out = app.runtime.run_turn(state, "flood")
        assert out[-1] == config.fallback_message
        assert state.turn.error is not None
        assert len([e for e in state.history if isinstance(e, Listen)]) == 1


class TestStopSemantics:
    def test_stop_suppresses_pending_non_rail_output(self):
        source = (
            'define user trigger combo\n  "go"\n\n'
            'define bot first reply\n  "you should not see this"\n\n'
            "define flow combo\n  user trigger combo\n  bot first reply\n  stop\n"
        )
        mock = MockLLM([MockRule("generate_user_intent", "", "trigger combo")])
        app, _ = make_app(make_config(source), mock=mock)
        state = app.runtime.new_session()
        assert app.runtime.run_turn(state, "go") == []
        assert state.turn.aborted

    def test_stop_aborts_other_mid_flow_heads(self):
        mock = MockLLM([
            MockRule("generate_user_intent", "", "start multi", consume_once=True),
            MockRule("generate_user_intent", "", "trigger halt", consume_once=True),
        ])
        source = (
            'define bot step reply\n  "step"\n\n'
            "define flow multi\n  user start multi\n  bot step reply\n  user continue multi\n  bot step reply\n\n"
            "define flow halting\n  user trigger halt\n  stop\n"
        )
        app, _ = make_app(make_config(source), mock=mock)
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "first")
        multi_head = next(h for h in state.flow_heads if h.flow_name == "multi")
        assert multi_head.element_index > 0
        app.runtime.run_turn(state, "boom")
        # the mid-flow head was aborted by stop, then re-instantiated at Listen
        multi_head = next(h for h in state.flow_heads if h.flow_name == "multi")
        assert multi_head.element_index == 0 and multi_head.status == "active"


class TestEventSourcing:
    def test_context_rebuilds_from_history(self):
        mock = MockLLM([MockRule("generate_user_intent", "", "ask math question")])
        source = (
            'define user ask math question\n  "math"\n\n'
            'define bot respond with computed answer\n  "ok"\n\n'
            "define flow math\n  user ask math question\n"
            "  $answer = execute wolfram_alpha_request\n"
            "  $copy = $answer\n"
            "  bot respond with computed answer\n"
        )
        app, _ = make_app(make_config(source), mock=mock)
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "math")
        assert rebuild_context(state.history) == state.context
        assert state.context == {"answer": "42", "copy": "42"}

    def test_replay_reproduces_state(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "Hello there!")
        app.runtime.run_turn(state, "hi")
        replayed = app.runtime.replay(state.history)
        assert replayed.snapshot() == state.snapshot()

    def test_replay_after_jsonl_round_trip(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "Hello there!")
        text = events_to_jsonl(state.history)
        events = events_from_jsonl(text)
        assert events == state.history
        replayed = app.runtime.replay(events)
        assert replayed.snapshot() == state.snapshot()

    def test_replayed_session_continues_identically(self, greeting_app):
        app, _ = greeting_app
        original = app.runtime.new_session()
        app.runtime.run_turn(original, "Hello there!")
        resumed = app.runtime.replay(list(original.history))
        out_original = app.runtime.run_turn(original, "hi")
        out_resumed = app.runtime.run_turn(resumed, "hi")
        assert out_original == out_resumed
        assert original.snapshot() == resumed.snapshot()


class TestActions:
    def test_duplicate_registration_rejected(self):
        from railgate.runtime import ActionRegistry

        registry = ActionRegistry()
        registry.register("a", lambda ctx: None)
        with pytest.raises(ValueError):
            registry.register("a", lambda ctx: None)

    def test_unknown_action_fails_at_config_validation(self):
        with pytest.raises(UnknownAction):
            make_app(make_config(
                "define flow bad\n  user x\n  execute not_a_real_action\n"
            ))

    def test_throwing_action_yields_failed_status_and_null(self):
        def exploding(ctx):
            raise RuntimeError("boom")

        mock = MockLLM([MockRule("generate_user_intent", "", "trigger explosion")])
        source = (
            'define user trigger explosion\n  "go"\n\n'
            'define bot report failure\n  "the action failed"\n\n'
            "define flow fragile\n  user trigger explosion\n"
            "  $result = execute exploding\n"
            "  if not $result\n    bot report failure\n"
        )
        config = make_config(source)
        app = build_app(
            config,
            gateway=LLMGateway(mock),
            embedder=MockEmbedder(64),
            extra_actions={"exploding": exploding},
        )
        state = app.runtime.new_session()
        assert app.runtime.run_turn(state, "go") == ["the action failed"]
        finished = [e for e in state.history if isinstance(e, ActionFinished)]
        assert finished[0].status == "failed"
        assert finished[0].return_value is None
        assert state.context["result"] is None

    def test_action_context_shortcuts(self):
        seen = {}

        def probe(ctx):
            seen["last_user_message"] = ctx.get("last_user_message")
            return True

        mock = MockLLM([MockRule("generate_user_intent", "", "probe me")])
        source = (
            'define user probe me\n  "probe"\n\n'
            'define bot acknowledge probe\n  "ack"\n\n'
            "define flow probing\n  user probe me\n  $x = execute probe\n  bot acknowledge probe\n"
        )
        config = make_config(source)
        app = build_app(
            config,
            gateway=LLMGateway(mock),
            embedder=MockEmbedder(64),
            extra_actions={"probe": probe},
        )
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "probe text here")
        assert seen["last_user_message"] == "probe text here"

    def test_execute_action_directly(self, greeting_app):
        app, _ = greeting_app
        state = app.runtime.new_session()
        value = app.runtime.execute_action(state, "wolfram alpha request", {})
        assert value == "42"
        assert isinstance(state.history[0], StartAction)
        assert isinstance(state.history[1], ActionFinished)

    def test_action_args_evaluated(self):
        captured = {}

        def record(ctx, **kwargs):
            captured.update(kwargs)
            return True

        mock = MockLLM([MockRule("generate_user_intent", "", "use args")])
        source = (
            'define user use args\n  "args"\n\n'
            'define bot confirm args\n  "done"\n\n'
            "define flow argsy\n  user use args\n"
            '  execute record(table="users", limit=5, on=True)\n'
            "  bot confirm args\n"
        )
        config = make_config(source)
        app = build_app(
            config,
            gateway=LLMGateway(mock),
            embedder=MockEmbedder(64),
            extra_actions={"record": record},
        )
        state = app.runtime.new_session()
        app.runtime.run_turn(state, "args")
        assert captured == {"table": "users", "limit": 5, "on": True}
