"""Command line interface: chat REPL, web server, evaluation, linting."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .appconfig import ConfigError, load_app
from .colang import ColangError, parse_script, validate
from .embeddings import ProviderError
from .events import UtteranceUserActionFinished, events_from_jsonl


@click.group()
def main():
    """Programmable guardrails for LLM conversational systems."""


@main.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
@click.option("--trace", is_flag=True, help="print the turn trace as JSON after each reply")
@click.option(
    "--replay",
    "replay_file",
    type=click.Path(exists=True),
    help="feed user turns from an event-log JSONL file instead of stdin",
)
def chat(config_dir: str, trace: bool, replay_file: str | None):
    """Interactive chat against one app config."""
    try:
        app = load_app(config_dir)
    except (ConfigError, ColangError) as err:
        raise click.ClickException(str(err))
    state = app.runtime.new_session()

    def run_one(text: str) -> None:
        try:
            messages = app.runtime.run_turn(state, text)
        except ProviderError as err:
            click.echo(f"(provider error: {err})")
            return
        for message in messages:
            click.echo(message)
        if trace and state.last_trace is not None:
            click.echo(json.dumps(state.last_trace.to_dict(), default=str))

    if replay_file:
        events = events_from_jsonl(Path(replay_file).read_text(encoding="utf-8"))
        for event in events:
            if isinstance(event, UtteranceUserActionFinished):
                click.echo(f"> {event.text}")
                run_one(event.text)
        return

    click.echo(f"railgate chat: app {app.config.id!r} (ctrl-d to exit)")
    while True:
        try:
            line = input("> ")
        except EOFError:
            click.echo("")
            break
        if not line.strip():
            continue
        run_one(line)


@main.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(config_dir: str, host: str, port: int):
    """Serve the chat API over every app found under the config folder."""
    from .service import BindError, serve as run_server

    try:
        run_server(config_dir, host=host, port=port)
    except (ConfigError, BindError, ColangError) as err:
        raise click.ClickException(str(err))


@main.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
def lint(config_dir: str):
    """Parse and validate the app's flow files; exit 1 on errors."""
    directory = Path(config_dir)
    files = sorted(directory.glob("*.co"))
    if not files:
        raise click.ClickException(f"no .co files under {directory}")
    has_errors = False
    for co_file in files:
        try:
            script = parse_script(co_file.read_text(encoding="utf-8"), source_name=co_file.name)
        except ColangError as err:
            for diag in err.diagnostics:
                click.echo(f"{co_file}:{diag}")
            has_errors = True
            continue
        for diag in validate(script):
            click.echo(f"{co_file}:{diag}")
            if diag.severity == "error":
                has_errors = True
    if has_errors:
        sys.exit(1)
    click.echo(f"ok: {len(files)} file(s) checked")


@main.group()
def eval():
    """Evaluation harness for topical and execution rails."""


def _load_eval_app(config_dir: str | None, dataset=None):
    from .appconfig import RailsAppConfig, ModelSettings, EmbeddingSettings, build_app
    from .evalharness import build_intent_script

    if config_dir is not None:
        return load_app(config_dir)
    if dataset is None:
        raise click.ClickException("--config is required for this evaluation")
    # No config given: build the trivial app for the dataset's intents.
    config = RailsAppConfig(
        id="<generated>",
        script=build_intent_script(dataset),
        general_instructions="",
        sample_conversation="",
        model=ModelSettings(kind="mock"),
        embedding=EmbeddingSettings(kind="mock"),
    )
    return build_app(config)


def _emit_report(metrics, format: str, out: str | None):
    from .evalharness import report

    rendered = report(metrics, format=format)
    if out:
        Path(out).write_text(rendered, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(rendered, nl=False)


@eval.command()
@click.option("--config", "config_dir", type=click.Path(exists=True))
@click.option("--data", "data_file", required=True, type=click.Path(exists=True))
@click.option("--k", default="all", show_default=True, help="indexed samples per intent (N or 'all')")
@click.option("--threshold", type=float, default=None, help="similarity threshold (omit for exact match)")
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--balance", "max_per_intent", type=int, default=None, help="balance to at most N samples per intent")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--out", type=click.Path(), default=None)
@click.option("--log", "log_path", type=click.Path(), default=None, help="per-record JSONL log")
def topical(config_dir, data_file, k, threshold, seed, max_per_intent, fmt, out, log_path):
    """Topical rail accuracy at the three pipeline stages."""
    from .evalharness import balance_dataset, eval_topical, load_intent_csv

    dataset = load_intent_csv(data_file)
    if max_per_intent:
        dataset = balance_dataset(dataset, max_per_intent, seed)
    app = _load_eval_app(config_dir, dataset)
    k_value = k if k == "all" else int(k)
    try:
        metrics = eval_topical(
            app, dataset, k=k_value, threshold=threshold, seed=seed, log_path=log_path
        )
    except (ConfigError, ProviderError) as err:
        raise click.ClickException(str(err))
    _emit_report(metrics, fmt, out)


@eval.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
@click.option("--harmful", "harmful_file", required=True, type=click.Path(exists=True))
@click.option("--helpful", "helpful_file", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["input", "output", "both"]), default="both")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--out", type=click.Path(), default=None)
@click.option("--log", "log_path", type=click.Path(), default=None)
def moderation(config_dir, harmful_file, helpful_file, mode, fmt, out, log_path):
    """Moderation rates over harmful/helpful prompt sets."""
    from .evalharness import eval_moderation, load_prompt_lines

    app = _load_eval_app(config_dir)
    metrics = eval_moderation(
        app,
        load_prompt_lines(harmful_file),
        load_prompt_lines(helpful_file),
        mode=mode,
        log_path=log_path,
    )
    _emit_report(metrics, fmt, out)


@eval.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_file", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--out", type=click.Path(), default=None)
@click.option("--log", "log_path", type=click.Path(), default=None)
def factcheck(config_dir, data_file, fmt, out, log_path):
    """Fact-checking accuracy over labeled (context, question, answer) triples."""
    from .evalharness import eval_factcheck, load_triples_jsonl

    app = _load_eval_app(config_dir)
    metrics = eval_factcheck(app, load_triples_jsonl(data_file), log_path=log_path)
    _emit_report(metrics, fmt, out)


@eval.command()
@click.option("--config", "config_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_file", type=click.Path(exists=True), default=None,
              help="question list; omit to use the bundled false-premise set")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--out", type=click.Path(), default=None)
@click.option("--log", "log_path", type=click.Path(), default=None)
def hallucination(config_dir, data_file, fmt, out, log_path):
    """Hallucination rail interception rate over false-premise questions."""
    from .evalharness import (
        default_false_premise_questions,
        eval_hallucination,
        load_prompt_lines,
    )

    app = _load_eval_app(config_dir)
    questions = (
        load_prompt_lines(data_file) if data_file else default_false_premise_questions()
    )
    metrics = eval_hallucination(app, questions, log_path=log_path)
    _emit_report(metrics, fmt, out)


if __name__ == "__main__":
    main()
