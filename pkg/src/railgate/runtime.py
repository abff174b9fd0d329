"""Event-driven dialogue runtime.

The runtime proxies between the user and the LLM in three stages per
turn: generate the canonical form for the user input, decide the next
step (defined flow or LLM fallback), and produce the bot message(s).
Wildcard input-rail flows run before intent generation; wildcard
output-rail flows vet every generated utterance.

State transitions are split in two layers so that replaying a session's
event log reproduces the exact final state:

* `_apply(state, event)` is the deterministic fold: it updates context,
  advances flow heads, and performs instant steps (conditionals, stop).
  It never executes actions and never calls an LLM.
* The driver (`_drive`) runs during live turns only: it executes
  actions, emits bot intents, and appends the resulting events, each of
  which goes through `_apply`. Replay folds recorded events through
  `_apply` alone, so actions are not re-executed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .colang import (
    WILDCARD,
    And,
    Assign,
    BoolLit,
    BotEmit,
    Eq,
    ExecuteAction,
    Expr,
    FlowDef,
    If,
    Neq,
    Not,
    NumLit,
    Or,
    Stop,
    TextLit,
    UserMatch,
    VarRef,
)
from .embeddings import ProviderError
from .events import (
    ActionFinished,
    BotIntent,
    ContextUpdate,
    Event,
    Listen,
    StartAction,
    StartUtteranceBotAction,
    UserIntent,
    UtteranceUserActionFinished,
)
from .llm import MalformedStep
from .prompts import generate_bot_message, generate_next_step, generate_user_intent

EVENT_BUDGET = 100  # internal events per turn; overflow signals a looping flow


class EventLoopOverflow(Exception):
    pass


class UnknownAction(Exception):
    pass


class TurnOrderError(Exception):
    """run_turn called while the previous turn had not reached Listen."""


# --- compiled flow programs -------------------------------------------------
# Flow elements compile to a linear instruction list; `if`/`else` become
# conditional jumps so a head's position is a single program counter.


@dataclass(frozen=True)
class IMatchUser:
    form: Any  # str | WILDCARD


@dataclass(frozen=True)
class IEmitBot:
    form: Any


@dataclass(frozen=True)
class IRunAction:
    action: str
    args: tuple[tuple[str, Expr], ...]
    result_var: str | None


@dataclass(frozen=True)
class ISetVar:
    var: str
    expr: Expr


@dataclass
class ICondJump:
    cond: Expr
    target: int = -1  # jump here when the condition is falsy


@dataclass
class IJump:
    target: int = -1


@dataclass(frozen=True)
class IHalt:
    pass


@dataclass(frozen=True)
class FlowProgram:
    name: str
    instructions: tuple
    is_input_rail: bool
    is_output_rail: bool
    order: int  # definition order across the merged script

    @property
    def is_rail(self) -> bool:
        return self.is_input_rail or self.is_output_rail


def compile_flow(flow: FlowDef, order: int) -> FlowProgram:
    out: list = []
    _compile_elements(flow.elements, out)
    return FlowProgram(
        name=flow.name,
        instructions=tuple(out),
        is_input_rail=flow.is_input_rail,
        is_output_rail=flow.is_output_rail,
        order=order,
    )


def _compile_elements(elements, out: list) -> None:
    for el in elements:
        if isinstance(el, UserMatch):
            out.append(IMatchUser(el.form))
        elif isinstance(el, BotEmit):
            out.append(IEmitBot(el.form))
        elif isinstance(el, ExecuteAction):
            out.append(IRunAction(el.action, el.args, el.result_var))
        elif isinstance(el, Assign):
            out.append(ISetVar(el.var, el.expr))
        elif isinstance(el, Stop):
            out.append(IHalt())
        elif isinstance(el, If):
            cj = ICondJump(el.cond)
            out.append(cj)
            _compile_elements(el.then, out)
            if el.orelse:
                j = IJump()
                out.append(j)
                cj.target = len(out)
                _compile_elements(el.orelse, out)
                j.target = len(out)
            else:
                cj.target = len(out)
        else:  # pragma: no cover
            raise TypeError(f"unknown flow element {el!r}")


# --- expression evaluation --------------------------------------------------


def eval_expression(context: dict[str, Any], expr: Expr) -> Any:
    """Total, null-propagating evaluation over the context.

    Missing variables read as null; `not null` is true; equality across
    different value categories is false.
    """
    if isinstance(expr, VarRef):
        return context.get(expr.name)
    if isinstance(expr, (BoolLit, TextLit, NumLit)):
        return expr.value
    if isinstance(expr, Not):
        return not _truthy(eval_expression(context, expr.inner))
    if isinstance(expr, And):
        return _truthy(eval_expression(context, expr.left)) and _truthy(
            eval_expression(context, expr.right)
        )
    if isinstance(expr, Or):
        return _truthy(eval_expression(context, expr.left)) or _truthy(
            eval_expression(context, expr.right)
        )
    if isinstance(expr, Eq):
        return _values_equal(
            eval_expression(context, expr.left), eval_expression(context, expr.right)
        )
    if isinstance(expr, Neq):
        return not _values_equal(
            eval_expression(context, expr.left), eval_expression(context, expr.right)
        )
    raise TypeError(f"unknown expression {expr!r}")  # pragma: no cover


def _truthy(value: Any) -> bool:
    return bool(value)


def _category(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "text"
    return type(value).__name__


def _values_equal(a: Any, b: Any) -> bool:
    if _category(a) != _category(b):
        return False
    return a == b


# --- state ------------------------------------------------------------------


@dataclass
class FlowHead:
    flow_name: str
    element_index: int = 0
    status: str = "active"  # active | completed | aborted
    local_bindings: dict[str, Any] = field(default_factory=dict)


@dataclass
class TurnOutput:
    text: str
    rail: bool  # emitted by a rail flow (survives `stop`)
    suppressed: bool = False


@dataclass
class TurnState:
    """Per-turn bookkeeping rebuilt identically by the event fold."""

    events: int = 0
    start_seq: int = 0
    aborted: bool = False
    ended: bool = False
    intent_form: str | None = None
    intent_matched: bool = False
    matched_flow: str | None = None
    fallback_form: str | None = None
    last_bot_origin: str = "main"
    emitting_flow: str | None = None
    open_action: str | None = None
    outputs: list[TurnOutput] = field(default_factory=list)
    # trace-only fields below; populated during live turns, not by replay
    rail_verdicts: list = field(default_factory=list)
    llm_calls: list[tuple[str, int]] = field(default_factory=list)
    last_prompts: dict[str, str] = field(default_factory=dict)
    error: str | None = None
    budget_exempt: bool = False


@dataclass
class TurnTrace:
    user_intent: str | None
    intent_matched: bool
    decision: str | None  # flow name or "llm_fallback"
    rail_verdicts: list
    llm_calls: list[tuple[str, int]]
    events: list[Event]
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        from .events import event_to_dict

        return {
            "user_intent": self.user_intent,
            "intent_matched": self.intent_matched,
            "decision": self.decision,
            "rail_verdicts": [v.to_dict() for v in self.rail_verdicts],
            "llm_calls": [{"kind": k, "latency_ms": ms} for k, ms in self.llm_calls],
            "events": [event_to_dict(e) for e in self.events],
            "error": self.error,
        }


@dataclass
class DialogueState:
    history: list[Event]
    context: dict[str, Any]
    flow_heads: list[FlowHead]
    config_ref: Any
    turn: TurnState = field(default_factory=TurnState)
    last_trace: TurnTrace | None = None

    def record_llm_call(self, kind: str, latency_ms: int, prompt: str | None = None) -> None:
        self.turn.llm_calls.append((kind, latency_ms))
        if prompt is not None:
            self.turn.last_prompts[kind] = prompt

    def snapshot(self) -> dict[str, Any]:
        """Replay-comparable view: history, context, heads, turn outputs."""
        from .events import event_to_dict

        return {
            "history": [event_to_dict(e) for e in self.history],
            "context": dict(self.context),
            "heads": [
                (h.flow_name, h.element_index, h.status) for h in self.flow_heads
            ],
            "outputs": [(o.text, o.rail, o.suppressed) for o in self.turn.outputs],
            "aborted": self.turn.aborted,
        }


# --- decisions ---------------------------------------------------------------


@dataclass(frozen=True)
class FlowStep:
    flow_name: str
    element: Any  # the instruction following the matched user element


@dataclass(frozen=True)
class LLMFallback:
    pass


@dataclass(frozen=True)
class NoOp:
    pass


Decision = FlowStep | LLMFallback | NoOp


# --- action registry ----------------------------------------------------------


class ActionRegistry:
    """Named action callables; registering a duplicate name is an error."""

    def __init__(self):
        self._actions: dict[str, Callable] = {}

    def register(self, name: str, action: Callable) -> None:
        if name in self._actions:
            raise ValueError(f"action {name!r} already registered")
        self._actions[name] = action

    def get(self, name: str) -> Callable:
        try:
            return self._actions[name]
        except KeyError:
            raise UnknownAction(f"no action registered under {name!r}")

    def __contains__(self, name: str) -> bool:
        return name in self._actions

    def names(self) -> list[str]:
        return sorted(self._actions)


class ActionContext:
    """What an action sees: read access to the conversation context plus
    the shortcuts `last_user_message` / `last_bot_message`."""

    def __init__(self, runtime: "Runtime", state: DialogueState):
        self._runtime = runtime
        self._state = state

    def get(self, key: str, default: Any = None) -> Any:
        if key == "last_user_message":
            return self._last_event_text(UtteranceUserActionFinished) or default
        if key == "last_bot_message":
            return self._last_event_text(StartUtteranceBotAction) or default
        if key == "last_bot_prompt":
            return self._state.turn.last_prompts.get("generate_bot_message", default)
        return self._state.context.get(key, default)

    def _last_event_text(self, cls) -> str | None:
        for event in reversed(self._state.history):
            if isinstance(event, cls):
                return event.text
        return None

    @property
    def gateway(self):
        return self._runtime.gateway

    @property
    def config(self):
        return self._runtime.config

    def record_verdict(self, verdict) -> None:
        self._state.turn.rail_verdicts.append(verdict)


# --- the runtime ---------------------------------------------------------------


class Runtime:
    """One per loaded application; shared across sessions.

    A single session's state must not be driven concurrently; distinct
    sessions may run in parallel (config, programs and indexes are
    immutable after construction).
    """

    def __init__(self, config, gateway, indexes, registry: ActionRegistry):
        self.config = config
        self.gateway = gateway
        self.indexes = indexes
        self.registry = registry

        programs = [compile_flow(f, i) for i, f in enumerate(config.script.flows)]
        # Input rails run first; output rails must drain before further
        # bot emissions, so they come next; topical flows last. Definition
        # order is kept within each class.
        programs.sort(
            key=lambda p: (0 if p.is_input_rail else 1 if p.is_output_rail else 2, p.order)
        )
        self.programs: dict[str, FlowProgram] = {p.name: p for p in programs}
        self.head_order: list[str] = [p.name for p in programs]

        for program in programs:
            for instr in program.instructions:
                if isinstance(instr, IRunAction) and instr.action not in self.registry:
                    raise UnknownAction(
                        f"flow {program.name!r} executes unregistered action "
                        f"{instr.action!r}"
                    )

    # -- sessions ------------------------------------------------------------

    def new_session(self) -> DialogueState:
        heads = [FlowHead(flow_name=name) for name in self.head_order]
        return DialogueState(history=[], context={}, flow_heads=heads, config_ref=self.config)

    # -- public event API ------------------------------------------------------

    def process_event(self, state: DialogueState, event: Event) -> list[Event]:
        """Append an event, advance flows, and run every deterministic or
        LLM-backed consequence until the runtime settles. Returns all
        events appended (the input event included)."""
        before = len(state.history)
        self._append(state, event)
        self._drive_until_settled(state)
        return state.history[before:]

    def replay(self, events: list[Event]) -> DialogueState:
        """Fold a recorded event log into a fresh session state."""
        state = self.new_session()
        for event in events:
            state.history.append(event)
            self._apply(state, event)
        return state

    # -- decisions ---------------------------------------------------------------

    def decide_next_step(self, state: DialogueState, user_intent: str) -> Decision:
        if state.turn.aborted:
            return NoOp()
        head = self._select_intent_head(state, user_intent)
        if head is None:
            return LLMFallback()
        program = self.programs[head.flow_name]
        pc = self._peek_after_match(state, program, head.element_index)
        element = program.instructions[pc] if pc < len(program.instructions) else None
        return FlowStep(flow_name=head.flow_name, element=element)

    def _peek_after_match(self, state: DialogueState, program: FlowProgram, pc: int) -> int:
        pc += 1
        while pc < len(program.instructions):
            instr = program.instructions[pc]
            if isinstance(instr, ICondJump):
                pc = pc + 1 if _truthy(eval_expression(state.context, instr.cond)) else instr.target
            elif isinstance(instr, IJump):
                pc = instr.target
            else:
                break
        return pc

    # -- turns ---------------------------------------------------------------------

    def run_turn(self, state: DialogueState, user_text: str) -> list[str]:
        """Run one full user turn; returns the visible bot utterances."""
        if not user_text or not user_text.strip():
            raise ValueError("user message is empty")
        if state.history and not isinstance(state.history[-1], Listen):
            raise TurnOrderError("previous turn did not end in Listen")

        decision: str | None = None
        try:
            self._append(state, UtteranceUserActionFinished(text=user_text))
            self._drive_until_settled(state)  # input rails

            if not state.turn.aborted:
                form, matched = generate_user_intent(self.gateway, state, self.indexes)
                step = self.decide_next_step(state, form)
                decision = step.flow_name if isinstance(step, FlowStep) else "llm_fallback"
                self._append(state, UserIntent(form=form, matched=matched))
                self._drive_until_settled(state)

                if state.turn.fallback_form is not None and not state.turn.aborted:
                    try:
                        bot_form = generate_next_step(
                            self.gateway, state, self.indexes, form
                        )
                    except MalformedStep:
                        bot_form = self.config.fallback_intent
                    self._emit_bot_intent(state, bot_form)
        except (ProviderError, EventLoopOverflow) as err:
            state.turn.budget_exempt = True
            state.turn.error = str(err)
            self._append(
                state, StartUtteranceBotAction(text=self.config.fallback_message)
            )

        state.turn.budget_exempt = True
        self._append(state, Listen())

        outputs = [o.text for o in state.turn.outputs if not o.suppressed]
        turn_events = state.history[state.turn.start_seq :]
        state.last_trace = TurnTrace(
            user_intent=state.turn.intent_form,
            intent_matched=state.turn.intent_matched,
            decision=decision if decision is not None else state.turn.matched_flow,
            rail_verdicts=list(state.turn.rail_verdicts),
            llm_calls=list(state.turn.llm_calls),
            events=list(turn_events),
            error=state.turn.error,
        )
        return outputs

    # -- the driver (live execution only) ----------------------------------------------

    def _drive_until_settled(self, state: DialogueState) -> None:
        while True:
            pending_form = self._drive(state)
            if pending_form is None:
                return
            text = generate_bot_message(self.gateway, state, self.indexes, pending_form)
            self._append(state, StartUtteranceBotAction(text=text))

    def _drive(self, state: DialogueState) -> str | None:
        """Run runnable heads until all wait on events; returns a bot form
        awaiting LLM message generation, or None when settled."""
        while not state.turn.aborted:
            found = self._first_runnable(state)
            if found is None:
                return None
            head, instr = found
            if isinstance(instr, IRunAction):
                self._execute_action(state, instr)
            elif isinstance(instr, ISetVar):
                value = eval_expression(state.context, instr.expr)
                self._append(state, ContextUpdate(key=instr.var, value=value))
            elif isinstance(instr, IEmitBot):
                self._append(state, BotIntent(form=instr.form))
                message = self._predefined_message(instr.form)
                if message is None:
                    return instr.form
                self._append(state, StartUtteranceBotAction(text=message))
        return None

    def _first_runnable(self, state: DialogueState):
        for head in state.flow_heads:
            if head.status != "active":
                continue
            program = self.programs[head.flow_name]
            if head.element_index >= len(program.instructions):
                continue
            instr = program.instructions[head.element_index]
            if isinstance(instr, (IRunAction, ISetVar)):
                return head, instr
            if isinstance(instr, IEmitBot) and instr.form is not WILDCARD:
                return head, instr
        return None

    def _emit_bot_intent(self, state: DialogueState, form: str) -> None:
        self._append(state, BotIntent(form=form))
        message = self._predefined_message(form)
        if message is None:
            message = generate_bot_message(self.gateway, state, self.indexes, form)
        self._append(state, StartUtteranceBotAction(text=message))
        self._drive_until_settled(state)

    def _predefined_message(self, form) -> str | None:
        definition = self.config.script.bot_def(form) if isinstance(form, str) else None
        if definition is None:
            return None
        return definition.utterances[0]  # always the first variant, deterministically

    def _execute_action(self, state: DialogueState, instr: IRunAction) -> None:
        args = tuple(
            (name, eval_expression(state.context, expr)) for name, expr in instr.args
        )
        self._append(state, StartAction(name=instr.action, args=args))
        action = self.registry.get(instr.action)
        status = "success"
        value: Any = None
        try:
            value = action(ActionContext(self, state), **dict(args))
        except Exception:
            status = "failed"
            value = None
        if instr.result_var is not None:
            self._append(state, ContextUpdate(key=instr.result_var, value=value))
        self._append(state, ActionFinished(name=instr.action, return_value=value, status=status))

    def execute_action(self, state: DialogueState, name: str, args: dict[str, Any]) -> Any:
        """Directly invoke a registered action, with full event bookkeeping."""
        normalized = name.strip().replace(" ", "_")
        action = self.registry.get(normalized)
        arg_items = tuple(args.items())
        self._append(state, StartAction(name=normalized, args=arg_items))
        status = "success"
        value: Any = None
        try:
            value = action(ActionContext(self, state), **args)
        except Exception:
            status = "failed"
        self._append(state, ActionFinished(name=normalized, return_value=value, status=status))
        return value

    # -- event append + fold -----------------------------------------------------------

    def _append(self, state: DialogueState, event: Event) -> Event:
        event = replace(event, seq=len(state.history))
        state.history.append(event)
        self._apply(state, event)
        if (
            state.turn.events > EVENT_BUDGET
            and not state.turn.budget_exempt
            and not isinstance(event, Listen)
        ):
            raise EventLoopOverflow(
                f"turn exceeded the {EVENT_BUDGET}-event budget (looping flow?)"
            )
        return event

    def _apply(self, state: DialogueState, event: Event) -> None:
        """The deterministic fold; the only place session state mutates."""
        if isinstance(event, UtteranceUserActionFinished):
            state.turn = TurnState(start_seq=event.seq if event.seq >= 0 else len(state.history) - 1)
            state.turn.events = 1
            for i, head in enumerate(state.flow_heads):
                program = self.programs[head.flow_name]
                if program.is_input_rail:
                    fresh = FlowHead(flow_name=head.flow_name)
                    state.flow_heads[i] = fresh
                    self._advance(state, fresh)
            return

        state.turn.events += 1

        if isinstance(event, UserIntent):
            state.turn.intent_form = event.form
            state.turn.intent_matched = event.matched
            head = self._select_intent_head(state, event.form)
            if head is None:
                state.turn.fallback_form = event.form
            else:
                state.turn.matched_flow = head.flow_name
                self._advance(state, head)

        elif isinstance(event, StartAction):
            state.turn.open_action = event.name

        elif isinstance(event, ContextUpdate):
            state.context[event.key] = event.value
            if state.turn.open_action is None:
                head = self._first_head_at(
                    state, lambda i: isinstance(i, ISetVar) and i.var == event.key
                )
                if head is not None:
                    self._advance(state, head)

        elif isinstance(event, ActionFinished):
            state.turn.open_action = None
            head = self._first_head_at(
                state, lambda i: isinstance(i, IRunAction) and i.action == event.name
            )
            if head is not None:
                self._advance(state, head)

        elif isinstance(event, BotIntent):
            # The emitting head stays at its bot element until the
            # utterance event lands, so a following `stop` can only
            # suppress messages that are already in the turn outputs.
            head = self._first_head_at(
                state,
                lambda i: isinstance(i, IEmitBot)
                and i.form is not WILDCARD
                and i.form == event.form,
            )
            if head is not None:
                program = self.programs[head.flow_name]
                state.turn.last_bot_origin = "rail" if program.is_rail else "main"
                state.turn.emitting_flow = head.flow_name
            else:
                state.turn.last_bot_origin = "main"
                state.turn.emitting_flow = None

        elif isinstance(event, StartUtteranceBotAction):
            origin = state.turn.last_bot_origin
            state.turn.last_bot_origin = "main"
            state.turn.outputs.append(TurnOutput(text=event.text, rail=origin == "rail"))
            if state.turn.emitting_flow is not None:
                for head in state.flow_heads:
                    if head.flow_name == state.turn.emitting_flow and head.status == "active":
                        self._advance(state, head)
                        break
                state.turn.emitting_flow = None
            if origin == "main" and not state.turn.aborted:
                for i, head in enumerate(state.flow_heads):
                    program = self.programs[head.flow_name]
                    if program.is_output_rail:
                        fresh = FlowHead(flow_name=head.flow_name)
                        state.flow_heads[i] = fresh
                        self._advance(state, fresh)

        elif isinstance(event, Listen):
            state.turn.ended = True
            for i, head in enumerate(state.flow_heads):
                program = self.programs[head.flow_name]
                if program.is_rail or head.status in ("completed", "aborted"):
                    state.flow_heads[i] = FlowHead(flow_name=head.flow_name)

    # -- head movement ------------------------------------------------------------------

    def _advance(self, state: DialogueState, head: FlowHead) -> None:
        head.element_index += 1
        self._settle(state, head)

    def _settle(self, state: DialogueState, head: FlowHead) -> None:
        program = self.programs[head.flow_name]
        while head.status == "active":
            if head.element_index >= len(program.instructions):
                head.status = "completed"
                return
            instr = program.instructions[head.element_index]
            if isinstance(instr, ICondJump):
                if _truthy(eval_expression(state.context, instr.cond)):
                    head.element_index += 1
                else:
                    head.element_index = instr.target
            elif isinstance(instr, IJump):
                head.element_index = instr.target
            elif isinstance(instr, IHalt):
                head.status = "aborted"
                self._stop_turn(state)
                return
            else:
                return

    def _stop_turn(self, state: DialogueState) -> None:
        state.turn.aborted = True
        for output in state.turn.outputs:
            if not output.rail:
                output.suppressed = True
        for head in state.flow_heads:
            program = self.programs[head.flow_name]
            if head.status == "active" and not program.is_rail and head.element_index > 0:
                head.status = "aborted"

    def _select_intent_head(self, state: DialogueState, form: str) -> FlowHead | None:
        mid_exact: list[FlowHead] = []
        start_exact: list[FlowHead] = []
        mid_wild: list[FlowHead] = []
        for head in state.flow_heads:
            if head.status != "active":
                continue
            program = self.programs[head.flow_name]
            if program.is_rail:
                continue
            if head.element_index >= len(program.instructions):
                continue
            instr = program.instructions[head.element_index]
            if not isinstance(instr, IMatchUser):
                continue
            if instr.form is WILDCARD:
                if head.element_index > 0:
                    mid_wild.append(head)
            elif instr.form == form:
                if head.element_index > 0:
                    mid_exact.append(head)
                else:
                    start_exact.append(head)
        for bucket in (mid_exact, start_exact, mid_wild):
            if bucket:
                return bucket[0]
        return None

    def _first_head_at(self, state: DialogueState, predicate) -> FlowHead | None:
        for head in state.flow_heads:
            if head.status != "active":
                continue
            program = self.programs[head.flow_name]
            if head.element_index >= len(program.instructions):
                continue
            if predicate(program.instructions[head.element_index]):
                return head
        return None


def rebuild_context(events: list[Event]) -> dict[str, Any]:
    """Fold ContextUpdate events only; the context invariant checker."""
    context: dict[str, Any] = {}
    for event in events:
        if isinstance(event, ContextUpdate):
            context[event.key] = event.value
    return context
