"""Evaluation tooling for topical and execution rails.

Topical accuracy is measured at the three pipeline stages (user
canonical form, next step, bot message) with k-shot and similarity
threshold ablations; moderation, fact-checking and hallucination rails
get their own metrics. All runs are deterministic for a fixed seed and
offline providers, and every evaluation emits a per-record JSONL log so
metrics can be recomputed independently.
"""

from __future__ import annotations

import csv
import json
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .appconfig import App, ConfigError, RailsAppConfig
from .colang import BotEmit, BotMessageDef, FlowDef, Script, UserMatch, UserMessageDef
from .embeddings import ProviderError
from .events import UserIntent, UtteranceUserActionFinished
from .index import RetrievalConfig, build_indexes, knn, similarity_match
from .prompts import assemble_task_prompt, defined_user_forms
from .rails import check_facts, check_hallucination, check_jailbreak, output_moderation
from .runtime import DialogueState

DEFAULT_SEED = 42
DEFAULT_DEFLECTION_MARKERS = (
    "I don't know",
    "cannot answer",
    "I'm not able to",
)


# --- datasets ----------------------------------------------------------------


@dataclass(frozen=True)
class IntentRecord:
    utterance: str
    intent: str


@dataclass(frozen=True)
class IntentDataset:
    records: tuple[IntentRecord, ...]
    bot_messages: dict[str, str] = field(default_factory=dict)  # intent -> gold message

    def intents(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.intent, None)
        return list(seen)


def load_intent_csv(path: str | Path) -> IntentDataset:
    """Strict `utterance,intent` CSV with a header row."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["utterance", "intent"]:
            raise ValueError(f"{path}: expected header 'utterance,intent'")
        records = []
        for i, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}:{i}: expected two columns")
            utterance, intent = row[0].strip(), row[1].strip()
            if not utterance or not intent:
                raise ValueError(f"{path}:{i}: empty utterance or intent")
            records.append(IntentRecord(utterance, intent))
    return IntentDataset(tuple(records))


@dataclass(frozen=True)
class FactCheckRecord:
    context: str
    question: str
    answer: str
    label: bool  # True: grounded (positive), False: not grounded


def load_triples_jsonl(path: str | Path) -> list[FactCheckRecord]:
    """JSONL with context/question/answer/label per line (MSMARCO-style
    triples plus a grounded/not-grounded label)."""
    records = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        data = json.loads(line)
        try:
            label = data["label"]
            if isinstance(label, str):
                label = label.lower() in ("positive", "true", "grounded", "1")
            records.append(
                FactCheckRecord(
                    context=data["context"],
                    question=data.get("question", ""),
                    answer=data["answer"],
                    label=bool(label),
                )
            )
        except KeyError as exc:
            raise ValueError(f"{path}:{i}: missing field {exc}")
    return records


def load_prompt_lines(path: str | Path) -> list[str]:
    """Prompt set: plain text (one per line) or JSONL with a `prompt` key."""
    path = Path(path)
    lines = [l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
    if path.suffix == ".jsonl":
        return [json.loads(l)["prompt"] for l in lines]
    return lines


def default_false_premise_questions() -> list[str]:
    text = (
        resources.files("railgate")
        .joinpath("data/false_premise_questions.txt")
        .read_text(encoding="utf-8")
    )
    return [l for l in text.splitlines() if l.strip()]


# --- balancing ---------------------------------------------------------------


def balance_dataset(dataset: IntentDataset, max_per_intent: int, seed: int) -> IntentDataset:
    """Per intent, uniformly sample at most `max_per_intent` records with
    the seeded generator; intent order then sample order."""
    if max_per_intent < 1:
        raise ValueError("max_per_intent must be >= 1")
    rng = random.Random(seed)
    groups: dict[str, list[IntentRecord]] = {}
    for record in dataset.records:
        groups.setdefault(record.intent, []).append(record)
    out: list[IntentRecord] = []
    for intent, group in groups.items():
        take = min(len(group), max_per_intent)
        out.extend(rng.sample(group, take))
    return IntentDataset(tuple(out), dict(dataset.bot_messages))


# --- generated app builder ----------------------------------------------------


def intent_to_form(intent: str) -> str:
    """Canonical form for a dataset intent label: lowercase words."""
    words = re.split(r"[^a-z0-9]+", intent.lower())
    words = [w for w in words if w]
    if not words:
        raise ValueError(f"intent {intent!r} yields no canonical form")
    return " ".join(words)


def build_intent_script(dataset: IntentDataset) -> Script:
    """Map intents to canonical forms with one trivial flow each."""
    user_defs: list[UserMessageDef] = []
    bot_defs: list[BotMessageDef] = []
    flows: list[FlowDef] = []
    grouped: dict[str, list[str]] = {}
    for record in dataset.records:
        grouped.setdefault(record.intent, []).append(record.utterance)
    for intent, utterances in grouped.items():
        form = intent_to_form(intent)
        respond_form = f"respond {form}"
        deduped = list(dict.fromkeys(utterances))
        user_defs.append(UserMessageDef(canonical_form=form, examples=tuple(deduped)))
        flows.append(
            FlowDef(
                name=form,
                elements=(UserMatch(form=form), BotEmit(form=respond_form)),
            )
        )
        gold_message = dataset.bot_messages.get(intent)
        if gold_message is not None:
            bot_defs.append(
                BotMessageDef(canonical_form=respond_form, utterances=(gold_message,))
            )
    return Script(
        user_defs=tuple(user_defs),
        bot_defs=tuple(bot_defs),
        flows=tuple(flows),
        source_name="<generated>",
    )


# --- topical metrics ------------------------------------------------------------


@dataclass(frozen=True)
class TopicalMetrics:
    user_intent_acc: float
    bot_intent_acc: float
    bot_message_acc: float | None
    n_samples: int
    n_intents: int
    settings: dict

    def to_row(self) -> dict:
        return {
            "user_intent_acc": self.user_intent_acc,
            "bot_intent_acc": self.bot_intent_acc,
            "bot_message_acc": self.bot_message_acc,
            "n_samples": self.n_samples,
            "n_intents": self.n_intents,
            **{f"settings_{k}": v for k, v in sorted(self.settings.items())},
        }


class HoldOutViolation(AssertionError):
    pass


def eval_topical(
    app: App,
    dataset: IntentDataset,
    k: int | str = "all",
    threshold: float | None = None,
    seed: int = DEFAULT_SEED,
    log_path: str | Path | None = None,
) -> TopicalMetrics:
    """Three-stage topical accuracy with per-record hold-out.

    Stage 1 scores the generated user form (exact match, or similarity
    match when `threshold` is set). Stage 2 scores the predicted next
    step against the flow-defined step for the gold intent. Stage 3 runs
    only when the dataset carries gold bot messages.
    """
    config = app.config
    gateway = app.gateway
    embedder = app.embedder

    form_of: dict[str, str] = {}
    for intent in dataset.intents():
        form = intent_to_form(intent)
        if config.script.user_def(form) is None:
            raise ConfigError(
                f"dataset intent {intent!r} has no canonical form {form!r} in the script"
            )
        form_of[intent] = form

    gold_next: dict[str, str] = {}
    for flow in config.script.flows:
        first = flow.elements[0]
        if isinstance(first, UserMatch) and isinstance(first.form, str):
            for el in flow.elements[1:]:
                if isinstance(el, BotEmit) and isinstance(el.form, str):
                    gold_next[first.form] = el.form
                    break

    max_per_form = None if k == "all" else int(k)
    retrieval = RetrievalConfig(
        k_examples=config.retrieval.k_examples,
        similarity_threshold=config.retrieval.similarity_threshold,
        max_per_form=max_per_form,
    )
    indexes = build_indexes(config.script, embedder, retrieval)
    defined = defined_user_forms(config.script)
    score_messages = bool(dataset.bot_messages)

    log_rows: list[dict] = []
    stage1_hits = stage2_hits = stage3_hits = 0

    for i, record in enumerate(dataset.records):
        gold_form = form_of[record.intent]
        exclude = {
            item.id
            for item in indexes.user_examples.items
            if item.text == record.utterance and item.payload == gold_form
        }
        hits = knn(
            indexes.user_examples,
            record.utterance,
            config.retrieval.k_examples,
            embedder,
            exclude_ids=exclude,
        )
        for item, _ in hits:
            if item.text == record.utterance and item.payload == gold_form:
                raise HoldOutViolation(
                    f"record {i}: evaluated utterance retrieved as its own example"
                )

        state = DialogueState(
            history=[UtteranceUserActionFinished(text=record.utterance, seq=0)],
            context={},
            flow_heads=[],
            config_ref=config,
        )
        parts = assemble_task_prompt("generate_user_intent", config, state, hits)
        completion = gateway.complete(gateway.make_task("generate_user_intent", parts.render()))
        predicted_raw = _first_line(completion.text).lower()

        if threshold is not None:
            matched = similarity_match(predicted_raw, defined, threshold, embedder)
            predicted = matched if matched is not None else predicted_raw
        else:
            predicted = predicted_raw
        stage1 = predicted == gold_form
        stage1_hits += stage1

        predicted_next = gold_next.get(predicted)
        if predicted_next is None:
            state.history.append(UserIntent(form=predicted, matched=False, seq=1))
            flow_hits = knn(indexes.flows, predicted, config.retrieval.k_examples, embedder)
            parts = assemble_task_prompt("generate_next_step", config, state, flow_hits)
            completion = gateway.complete(
                gateway.make_task("generate_next_step", parts.render())
            )
            line = _first_line(completion.text)
            predicted_next = line[4:].strip().lower() if line.startswith("bot ") else None
        stage2 = predicted_next == gold_next.get(gold_form)
        stage2_hits += stage2

        stage3 = None
        predicted_message = None
        if score_messages:
            gold_message = dataset.bot_messages.get(record.intent)
            if predicted_next is not None:
                definition = config.script.bot_def(predicted_next)
                if definition is not None:
                    predicted_message = definition.utterances[0]
                else:
                    bot_hits = knn(
                        indexes.bot_examples, predicted_next, config.retrieval.k_examples, embedder
                    )
                    parts = assemble_task_prompt(
                        "generate_bot_message", config, state, bot_hits
                    )
                    completion = gateway.complete(
                        gateway.make_task("generate_bot_message", parts.render())
                    )
                    predicted_message = completion.text.strip()
            stage3 = predicted_message == gold_message
            stage3_hits += bool(stage3)

        log_rows.append(
            {
                "index": i,
                "utterance": record.utterance,
                "intent": record.intent,
                "gold_form": gold_form,
                "predicted_raw": predicted_raw,
                "predicted_form": predicted,
                "user_intent_correct": stage1,
                "predicted_next_step": predicted_next,
                "bot_intent_correct": stage2,
                "predicted_message": predicted_message,
                "bot_message_correct": stage3,
            }
        )

    n = len(dataset.records)
    if log_path is not None:
        _write_jsonl(log_path, log_rows)
    return TopicalMetrics(
        user_intent_acc=stage1_hits / n if n else 0.0,
        bot_intent_acc=stage2_hits / n if n else 0.0,
        bot_message_acc=(stage3_hits / n if n else 0.0) if score_messages else None,
        n_samples=n,
        n_intents=len(dataset.intents()),
        settings={"k": k, "threshold": threshold, "seed": seed},
    )


# --- moderation ----------------------------------------------------------------


@dataclass(frozen=True)
class ModerationMetrics:
    harmful_blocked_rate: float
    helpful_allowed_rate: float
    mode: str
    n_harmful: int
    n_helpful: int
    breakdown: dict  # harmful prompts: blocked at input / output / passed

    def to_row(self) -> dict:
        return {
            "mode": self.mode,
            "harmful_blocked_rate": self.harmful_blocked_rate,
            "helpful_allowed_rate": self.helpful_allowed_rate,
            "n_harmful": self.n_harmful,
            "n_helpful": self.n_helpful,
            **{f"breakdown_{k}": v for k, v in sorted(self.breakdown.items())},
        }


def eval_moderation(
    app: App,
    harmful_set: list[str],
    helpful_set: list[str],
    mode: str = "both",
    log_path: str | Path | None = None,
) -> ModerationMetrics:
    """Route prompts through the moderation pipeline in the given mode.

    A prompt that passes input moderation is answered by the model and
    the answer goes through output moderation (when the mode says so).
    Provider errors block the prompt and are logged.
    """
    if mode not in ("input", "output", "both"):
        raise ValueError(f"unknown moderation mode {mode!r}")
    if not harmful_set or not helpful_set:
        raise ValueError("both prompt sets must be nonempty")

    gateway = app.gateway
    log_rows: list[dict] = []

    def route(prompt: str) -> tuple[bool, str]:
        try:
            if mode in ("input", "both"):
                verdict = check_jailbreak(gateway, prompt)
                if not verdict.allowed:
                    return True, "input"
            if mode in ("output", "both"):
                completion = gateway.complete(
                    gateway.make_task("generate_bot_message", prompt)
                )
                verdict = output_moderation(gateway, completion.text or "(empty)")
                if not verdict.allowed:
                    return True, "output"
            return False, "passed"
        except ProviderError as err:
            return True, f"provider_error: {err}"

    breakdown = {"input": 0, "output": 0, "passed": 0, "errors": 0}
    blocked_harmful = 0
    for i, prompt in enumerate(harmful_set):
        blocked, where = route(prompt)
        blocked_harmful += blocked
        if where.startswith("provider_error"):
            breakdown["errors"] += 1
        else:
            breakdown[where] += 1
        log_rows.append({"set": "harmful", "index": i, "prompt": prompt, "blocked": blocked, "stage": where})

    allowed_helpful = 0
    for i, prompt in enumerate(helpful_set):
        blocked, where = route(prompt)
        allowed_helpful += not blocked
        log_rows.append({"set": "helpful", "index": i, "prompt": prompt, "blocked": blocked, "stage": where})

    if log_path is not None:
        _write_jsonl(log_path, log_rows)
    return ModerationMetrics(
        harmful_blocked_rate=blocked_harmful / len(harmful_set),
        helpful_allowed_rate=allowed_helpful / len(helpful_set),
        mode=mode,
        n_harmful=len(harmful_set),
        n_helpful=len(helpful_set),
        breakdown=breakdown,
    )


# --- fact checking ----------------------------------------------------------------


@dataclass(frozen=True)
class FactCheckMetrics:
    accuracy: float
    positive_accuracy: float
    negative_accuracy: float
    confusion: dict  # tp / tn / fp / fn over grounded-positive labels
    n_records: int
    n_errors: int

    def to_row(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "positive_accuracy": self.positive_accuracy,
            "negative_accuracy": self.negative_accuracy,
            "n_records": self.n_records,
            "n_errors": self.n_errors,
            **{f"confusion_{k}": v for k, v in sorted(self.confusion.items())},
        }


def eval_factcheck(
    app: App,
    records: list[FactCheckRecord],
    log_path: str | Path | None = None,
) -> FactCheckMetrics:
    gateway = app.gateway
    confusion = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    n_errors = 0
    log_rows: list[dict] = []

    for i, record in enumerate(records):
        try:
            verdict = check_facts(gateway, record.context, record.answer)
        except ProviderError as err:
            n_errors += 1
            log_rows.append({"index": i, "error": str(err)})
            continue
        predicted = verdict.allowed
        if predicted and record.label:
            confusion["tp"] += 1
        elif not predicted and not record.label:
            confusion["tn"] += 1
        elif predicted and not record.label:
            confusion["fp"] += 1
        else:
            confusion["fn"] += 1
        log_rows.append(
            {
                "index": i,
                "label": record.label,
                "predicted_grounded": predicted,
                "judgment": verdict.raw_judgment,
            }
        )

    scored = sum(confusion.values())
    positives = confusion["tp"] + confusion["fn"]
    negatives = confusion["tn"] + confusion["fp"]
    if log_path is not None:
        _write_jsonl(log_path, log_rows)
    return FactCheckMetrics(
        accuracy=(confusion["tp"] + confusion["tn"]) / scored if scored else 0.0,
        positive_accuracy=confusion["tp"] / positives if positives else 0.0,
        negative_accuracy=confusion["tn"] / negatives if negatives else 0.0,
        confusion=confusion,
        n_records=len(records),
        n_errors=n_errors,
    )


# --- hallucination ----------------------------------------------------------------


@dataclass(frozen=True)
class HallucinationMetrics:
    intercepted_rate: float
    deflected_rate: float
    n_questions: int

    def to_row(self) -> dict:
        return {
            "intercepted_rate": self.intercepted_rate,
            "deflected_rate": self.deflected_rate,
            "n_questions": self.n_questions,
        }


def eval_hallucination(
    app: App,
    questions: list[str],
    deflection_markers: tuple[str, ...] = DEFAULT_DEFLECTION_MARKERS,
    log_path: str | Path | None = None,
) -> HallucinationMetrics:
    """Per question: a deflected base answer counts as handled; otherwise
    the self-consistency rail must intercept the confident answer."""
    if not questions:
        raise ValueError("questions must be nonempty")
    gateway = app.gateway
    cfg = app.config.rails.hallucination
    markers = [m.lower() for m in deflection_markers]

    deflected = 0
    intercepted = 0
    answered = 0
    log_rows: list[dict] = []
    for i, question in enumerate(questions):
        base = gateway.complete(gateway.make_task("generate_bot_message", question)).text
        if any(marker in base.lower() for marker in markers):
            deflected += 1
            log_rows.append({"index": i, "question": question, "deflected": True})
            continue
        answered += 1
        verdict = check_hallucination(gateway, question, base, cfg=cfg)
        flagged = not verdict.allowed
        intercepted += flagged
        log_rows.append(
            {
                "index": i,
                "question": question,
                "deflected": False,
                "answer": base,
                "intercepted": flagged,
            }
        )

    if log_path is not None:
        _write_jsonl(log_path, log_rows)
    return HallucinationMetrics(
        intercepted_rate=intercepted / answered if answered else 0.0,
        deflected_rate=deflected / len(questions),
        n_questions=len(questions),
    )


# --- reporting ----------------------------------------------------------------


def report(metrics, format: str = "table") -> str:
    """Render metrics as a fixed-layout table or a schema-stable JSON doc.

    Topical rows fill the six columns (user intent / bot intent / bot
    message, each in exact and similarity mode); cells the run did not
    produce show N/A.
    """
    if format not in ("table", "json"):
        raise ValueError(f"unknown report format {format!r}")
    metrics_list = metrics if isinstance(metrics, list) else [metrics]
    if not metrics_list:
        raise ValueError("no metrics to report")

    first = metrics_list[0]
    if isinstance(first, TopicalMetrics):
        return _report_topical(metrics_list, format)
    kind = {
        ModerationMetrics: "moderation",
        FactCheckMetrics: "factcheck",
        HallucinationMetrics: "hallucination",
    }[type(first)]
    if format == "json":
        doc = {"kind": kind, "rows": [m.to_row() for m in metrics_list]}
        return json.dumps(doc, indent=2, sort_keys=True)
    rows = [m.to_row() for m in metrics_list]
    headers = list(rows[0])
    return _render_table(headers, [[_fmt(r[h]) for h in headers] for r in rows])


def _report_topical(metrics_list: list[TopicalMetrics], format: str) -> str:
    headers = [
        "run",
        "Us int, no sim",
        "Us int, sim",
        "Bt int, no sim",
        "Bt int, sim",
        "Bt msg, no sim",
        "Bt msg, sim",
    ]
    table_rows = []
    json_rows = []
    for m in metrics_list:
        sim = m.settings.get("threshold") is not None
        label = f"k={m.settings.get('k')}" + (
            f", sim={m.settings.get('threshold')}" if sim else ""
        )
        cells = {h: "N/A" for h in headers[1:]}
        suffix = "sim" if sim else "no sim"
        cells[f"Us int, {suffix}"] = _fmt(m.user_intent_acc)
        cells[f"Bt int, {suffix}"] = _fmt(m.bot_intent_acc)
        if m.bot_message_acc is not None:
            cells[f"Bt msg, {suffix}"] = _fmt(m.bot_message_acc)
        table_rows.append([label] + [cells[h] for h in headers[1:]])
        json_rows.append(m.to_row())
    if format == "json":
        return json.dumps({"kind": "topical", "rows": json_rows}, indent=2, sort_keys=True)
    return _render_table(headers, table_rows)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.3f}"
    if value is None:
        return "N/A"
    return str(value)


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def _first_line(text: str) -> str:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped:
            return stripped
    return ""


def _write_jsonl(path: str | Path, rows: list[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
