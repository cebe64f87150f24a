"""Single command-line entry point: extend, evaluate, score, compare, stats,
report, annotate. Exit codes: 0 success, 1 domain errors, 2 usage errors.

Every subcommand prints a one-line machine-readable JSON summary on success.
All randomness flows from ``--seed``; per-turn seeds derive from it.
"""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click

from . import annotate as annotate_mod
from . import corpus as corpus_mod
from . import dst as dst_mod
from . import metrics as metrics_mod
from . import report as report_mod
from .config import RunConfig, load_config
from .errors import DuetwozError
from .extend import PromptTemplates, extend_corpus
from .gateway import Gateway, MockScript

VARIANT_BY_FLAG = {"single": dst_mod.VARIANT_SINGLE, "multi": dst_mod.VARIANT_MULTI}


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DuetwozError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}")
        except OSError as exc:
            raise click.ClickException(f"IoError: {exc}")
    return wrapper


def _summary(command: str, **payload) -> None:
    click.echo(json.dumps({"command": command, **payload}, sort_keys=True, ensure_ascii=False))


def _utcnow() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON run-config file; flags win over file values.")
@click.option("--seed", type=int, default=None, help="Run seed; all randomness derives from it.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Response cache directory (caching off when omitted).")
@click.option("--mock-script", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Mock-provider script; routes all requests to the mock.")
@click.pass_context
def cli(ctx, config_path, seed, cache_dir, mock_script):
    """Multi-user dialogue corpus extension and DST evaluation toolkit."""
    try:
        config = load_config(config_path).with_overrides(seed=seed, cache_dir=cache_dir)
    except DuetwozError as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}")
    ctx.obj = {"config": config, "mock_script": mock_script}


def _gateway(ctx_obj: dict, prompt_version: str) -> Gateway:
    config: RunConfig = ctx_obj["config"]
    script = MockScript.from_file(ctx_obj["mock_script"]) if ctx_obj["mock_script"] else None
    return Gateway(
        config,
        prompt_version=prompt_version,
        cache_dir=config.cache_dir,
        mock_script=script,
    )


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--model", required=True)
@click.option("--seed", type=int, default=None, help="Overrides the global seed for this run.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), default=None)
@click.option("--prompts-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--workers", type=int, default=None)
@click.pass_obj
@_guard
def extend(ctx_obj, in_path, out_path, model, seed, checkpoint_path, prompts_dir, workers):
    """Synthesize second-user utterances for every turn of a corpus."""
    config: RunConfig = ctx_obj["config"]
    run_seed = seed if seed is not None else config.seed
    templates = PromptTemplates.from_dir(prompts_dir) if prompts_dir else PromptTemplates.bundled()
    gateway = _gateway(ctx_obj, templates.version)
    dialogues, ingest = corpus_mod.load_corpus(in_path)
    extended = extend_corpus(
        dialogues, gateway, model,
        templates=templates,
        run_seed=run_seed,
        workers=workers if workers is not None else config.workers,
        checkpoint_path=checkpoint_path,
    )
    meta = corpus_mod.PipelineMeta(
        generator_model=model, generated_at=_utcnow(), prompt_version=templates.version,
    )
    corpus_mod.save_extended(extended, meta, out_path)
    with_user2 = sum(1 for d in extended for t in d.turns if t.user2_text)
    total_turns = sum(len(d.turns) for d in extended)
    _summary("extend", dialogues=len(extended), turns=total_turns, with_user2=with_user2,
             skipped=ingest.skipped_count, requests=gateway.request_count, out=str(out_path))


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", required=True)
@click.option("--variant", type=click.Choice(["single", "multi"]), required=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--single-shot", is_flag=True, default=False,
              help="Send the full transcript in one message instead of a chat session.")
@click.option("--prompts-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--workers", type=int, default=None)
@click.pass_obj
@_guard
def evaluate(ctx_obj, corpus_path, model, variant, out_path, single_shot, prompts_dir, workers):
    """Run zero-shot DST over a corpus, writing a predictions JSONL."""
    config: RunConfig = ctx_obj["config"]
    if prompts_dir:
        version = (Path(prompts_dir) / "VERSION").read_text("utf-8").strip()
        preamble_template = (Path(prompts_dir) / "dst_preamble.txt").read_text("utf-8")
        preamble = dst_mod.build_task_preamble(template=preamble_template)
    else:
        version = PromptTemplates.bundled().version
        preamble = None
    gateway = _gateway(ctx_obj, version)
    dialogues, _ = corpus_mod.load_corpus(corpus_path)
    records, manifest = dst_mod.run_dst(
        dialogues, gateway, model, VARIANT_BY_FLAG[variant], out_path,
        preamble=preamble,
        session_mode=not single_shot,
        workers=workers if workers is not None else config.workers,
        corpus_path=str(corpus_path),
        corpus_sha256=corpus_mod.file_sha256(corpus_path),
    )
    _summary("evaluate", records=len(records), requests=manifest.request_count,
             variant=manifest.variant, out=str(out_path))


@cli.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--classes/--no-classes", default=True, help="Include slot-class accuracies.")
@click.option("--variant", type=click.Choice(["single", "multi", "auto"]), default="auto",
              help="Variant for slot-class derivation; auto reads the run manifest.")
@click.option("--on-deltas", is_flag=True, default=False,
              help="Compare per-turn deltas instead of cumulative states for JGA.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_guard
def score(ctx_obj, pred_path, gold_path, classes, variant, on_deltas, out_path):
    """Score a predictions file against a gold corpus, emitting EvalReport JSON."""
    records = dst_mod.load_predictions(pred_path)
    dialogues, _ = corpus_mod.load_corpus(gold_path)
    if variant == "auto":
        manifest_file = dst_mod.manifest_path(pred_path)
        resolved = dst_mod.VARIANT_SINGLE
        if manifest_file.exists():
            manifest = dst_mod.RunManifest.from_json(json.loads(manifest_file.read_text("utf-8")))
            resolved = manifest.variant
    else:
        resolved = VARIANT_BY_FLAG[variant]
    meta = {"pred": str(pred_path), "gold": str(gold_path),
            "gold_sha256": corpus_mod.file_sha256(gold_path), "variant": resolved}
    result = metrics_mod.score(records, dialogues, resolved, with_classes=classes,
                               on_deltas=on_deltas, meta=meta)
    if out_path:
        Path(out_path).write_text(
            json.dumps(result.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    _summary("score", **result.to_json())


@cli.command()
@click.option("--a", "a_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Baseline (single-user) EvalReport JSON.")
@click.option("--b", "b_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Comparison (multi-user) EvalReport JSON.")
@click.option("--label", default="model")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@_guard
def compare(ctx_obj, a_path, b_path, label, out_dir):
    """Render baseline-plus-delta rows from two report files."""
    single = metrics_mod.EvalReport.from_json(json.loads(Path(a_path).read_text("utf-8")))
    multi = metrics_mod.EvalReport.from_json(json.loads(Path(b_path).read_text("utf-8")))
    doc = report_mod.render_comparison(single, multi, label=label)
    click.echo(doc.markdown)
    if out_dir:
        doc.write(out_dir)
    _summary("compare", domains=doc.data["domains"],
             avg_delta=(None if doc.data["jga"]["multi_avg"] is None
                        else doc.data["jga"]["multi_avg"] - doc.data["jga"]["single_avg"]))


@cli.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@_guard
def stats(ctx_obj, corpus_path):
    """Dataset statistics: counts, act distribution, mean utterance lengths."""
    dialogues, _ = corpus_mod.load_corpus(corpus_path)
    result = report_mod.corpus_stats(dialogues)
    _summary("stats", **result.to_json())


@cli.command(name="report")
@click.option("--single", "single_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--multi", "multi_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--judgments", "judgments_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Judgment JSONL; adds the clean-subset ablation.")
@click.option("--label", default="model")
@click.pass_obj
@_guard
def report_cmd(ctx_obj, single_path, multi_path, gold_path, out_dir, judgments_path, label):
    """Full comparison bundle: report.md, report.json, error_cases.jsonl."""
    dialogues, _ = corpus_mod.load_corpus(gold_path)
    single_records = dst_mod.load_predictions(single_path)
    multi_records = dst_mod.load_predictions(multi_path)
    gold_hash = corpus_mod.file_sha256(gold_path)
    single_report = metrics_mod.score(
        single_records, dialogues, dst_mod.VARIANT_SINGLE,
        meta={"pred": str(single_path), "gold_sha256": gold_hash},
    )
    multi_report = metrics_mod.score(
        multi_records, dialogues, dst_mod.VARIANT_MULTI,
        meta={"pred": str(multi_path), "gold_sha256": gold_hash},
    )
    doc = report_mod.render_comparison(single_report, multi_report, label=label)
    out = Path(out_dir)
    doc.write(out)
    cases = report_mod.mine_error_cases(single_records, multi_records, dialogues)
    report_mod.write_error_cases(cases, out / "error_cases.jsonl")
    clean = None
    if judgments_path:
        pairs = []
        with open(judgments_path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    payload = json.loads(line)
                    pairs.append((payload["dialogue_id"], payload["slot_consistent"]))
        clean_single, clean_multi = report_mod.clean_subset_eval(
            single_records, multi_records, dialogues, pairs,
        )
        clean_doc = report_mod.render_comparison(clean_single, clean_multi,
                                                 label=f"{label} (clean subset)")
        (out / "clean_report.md").write_text(clean_doc.markdown, encoding="utf-8")
        (out / "clean_report.json").write_text(
            json.dumps(clean_doc.data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        clean = clean_doc.data["jga"]
    _summary("report", error_cases=len(cases), out=str(out),
             clean_subset=bool(clean))


@cli.group()
def annotate():
    """Human-evaluation service commands."""


@annotate.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", "fraction", type=float, default=0.10, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--journal", "journal_path", type=click.Path(dir_okay=False),
              default="annotations.jsonl", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Built UI bundle to serve at /.")
@click.pass_obj
@_guard
def serve(ctx_obj, corpus_path, fraction, seed, port, journal_path, ui_dir):
    """Serve sampled dialogues and collect three-criteria judgments."""
    import uvicorn

    config: RunConfig = ctx_obj["config"]
    run_seed = seed if seed is not None else config.seed
    dialogues, _ = corpus_mod.load_corpus(corpus_path)
    store = annotate_mod.AnnotationStore(dialogues, fraction, run_seed, journal_path)
    app = annotate_mod.create_app(store, ui_dir=ui_dir)
    _summary("annotate-serve", sampled=len(store.tasks), port=port, journal=str(journal_path))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


@annotate.command()
@click.option("--journal", "journal_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_guard
def export(journal_path, out_path):
    """Materialize the journal (latest judgment per dialogue/evaluator pair)."""
    latest: dict[tuple[str, str], dict] = {}
    with open(journal_path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                payload = json.loads(line)
                latest[(payload["dialogue_id"], payload["evaluator_id"])] = payload
    with open(out_path, "w", encoding="utf-8") as handle:
        for key in sorted(latest):
            handle.write(json.dumps(latest[key], sort_keys=True, ensure_ascii=False) + "\n")
    _summary("annotate-export", judgments=len(latest), out=str(out_path))


main = cli

if __name__ == "__main__":
    sys.exit(main())
