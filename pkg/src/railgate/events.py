"""Dialogue events and their stable JSON wire format.

Every event carries a per-session monotonically increasing sequence
number. The JSON shape (`type` + payload keys) is used by the service's
trace output and by the JSONL replay files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any, Union


@dataclass(frozen=True)
class UtteranceUserActionFinished:
    text: str
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class UserIntent:
    form: str
    matched: bool
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class StartAction:
    name: str
    args: tuple[tuple[str, Any], ...] = ()
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class ActionFinished:
    name: str
    return_value: Any
    status: str  # "success" | "failed"
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BotIntent:
    form: str
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class StartUtteranceBotAction:
    text: str
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class ContextUpdate:
    key: str
    value: Any
    seq: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Listen:
    seq: int = field(default=-1, compare=False)


Event = Union[
    UtteranceUserActionFinished,
    UserIntent,
    StartAction,
    ActionFinished,
    BotIntent,
    StartUtteranceBotAction,
    ContextUpdate,
    Listen,
]

_EVENT_TYPES = {
    cls.__name__: cls
    for cls in (
        UtteranceUserActionFinished,
        UserIntent,
        StartAction,
        ActionFinished,
        BotIntent,
        StartUtteranceBotAction,
        ContextUpdate,
        Listen,
    )
}


def event_to_dict(event: Event) -> dict[str, Any]:
    payload: dict[str, Any] = {"type": type(event).__name__}
    for f in fields(event):
        value = getattr(event, f.name)
        if f.name == "args":
            value = {k: v for k, v in value}
        payload[f.name] = value
    return payload


def event_from_dict(data: dict[str, Any]) -> Event:
    data = dict(data)
    type_name = data.pop("type", None)
    cls = _EVENT_TYPES.get(type_name)
    if cls is None:
        raise ValueError(f"unknown event type {type_name!r}")
    if "args" in data and isinstance(data["args"], dict):
        # JSON objects preserve insertion order, so argument order survives.
        data["args"] = tuple(data["args"].items())
    return cls(**data)


def events_to_jsonl(events: list[Event]) -> str:
    return "".join(json.dumps(event_to_dict(e)) + "\n" for e in events)


def events_from_jsonl(text: str) -> list[Event]:
    out: list[Event] = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            out.append(event_from_dict(json.loads(line)))
    return out
