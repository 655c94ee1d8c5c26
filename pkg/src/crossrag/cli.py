"""Command-line interface.

Subcommands:
  kb add      register a knowledge base in a manifest (creates the manifest)
  kb list     print the registered knowledge bases
  kb summary  print the canonical registry summary JSON
  ask         answer one question through the full pipeline
  eval        run a scenario file and write JSONL run records
  report      aggregate record files into a markdown / JSON / CSV report

Exit codes: 0 on success, 2 for usage and configuration problems, 3 when a
requested run fails at runtime.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import CliConfig, client_for, load_config, load_synonyms
from .errors import (
    ConfigError,
    CrossRagError,
    DuplicateIdError,
    ManifestSyntaxError,
    PipelineError,
    RecordsError,
    ScenarioError,
    SourceUnreadableError,
)
from .harness import (
    REPORT_FORMATS,
    aggregate,
    load_scenario,
    read_records,
    render_report,
    run_scenario,
    write_records,
)
from .kb import (
    KnowledgeBaseDescriptor,
    Registry,
    build_summary,
    load_manifest,
    register_kb,
    save_manifest,
)
from .synth import PipelineOptions, answer
from .textsearch import RetrievalParams

log = logging.getLogger(__name__)

USAGE_EXIT = 2
RUNTIME_EXIT = 3

_SETUP_ERRORS = (ConfigError, ScenarioError, ManifestSyntaxError,
                 DuplicateIdError, SourceUnreadableError, RecordsError)


def _add_retrieval_flags(command: argparse.ArgumentParser) -> None:
    command.add_argument("--k", type=int, default=None,
                         help="override retrieved chunks per text subquery")
    command.add_argument("--chunk-tokens", type=int, default=None,
                         help="override tokens per chunk")
    command.add_argument("--overlap-tokens", type=int, default=None,
                         help="override token overlap between chunks")
    command.add_argument("--k1", type=float, default=None,
                         help="override the BM25 k1 parameter")
    command.add_argument("--b", type=float, default=None,
                         help="override the BM25 b parameter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossrag",
        description="Query text and tabular knowledge bases with one question.")
    parser.add_argument("--verbose", action="store_true",
                        help="log pipeline progress to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    kb = commands.add_parser("kb", help="manage knowledge base manifests")
    kb_commands = kb.add_subparsers(dest="kb_command", required=True)

    kb_add = kb_commands.add_parser("add", help="register a knowledge base")
    kb_add.add_argument("--manifest", required=True, type=Path,
                        help="manifest file (created when missing)")
    kb_add.add_argument("--id", required=True, help="unique knowledge base id")
    kb_add.add_argument("--kind", required=True, choices=("text", "table"),
                        help="source kind")
    kb_add.add_argument("--path", required=True, type=Path,
                        help="text file, directory of .txt files, or CSV file")
    kb_add.add_argument("--summary", default="",
                        help="one-line description shown to the router")

    kb_list = kb_commands.add_parser("list", help="list registered bases")
    kb_list.add_argument("--manifest", required=True, type=Path)

    kb_summary = kb_commands.add_parser(
        "summary", help="print the canonical registry summary JSON")
    kb_summary.add_argument("--manifest", required=True, type=Path)

    ask = commands.add_parser("ask", help="answer one question")
    ask.add_argument("--config", required=True, type=Path,
                     help="configuration file")
    ask.add_argument("--model", required=True,
                     help="model id from the config's providers table")
    ask.add_argument("--trace", action="store_true",
                     help="print a JSON trace (plan, retrieval, timings) "
                          "instead of plain text")
    _add_retrieval_flags(ask)
    ask.add_argument("--parallel", action="store_true",
                     help="run independent subqueries concurrently")
    ask.add_argument("query", help="the question to answer")

    ev = commands.add_parser("eval", help="run a scenario and record results")
    ev.add_argument("--config", required=True, type=Path)
    ev.add_argument("--model", required=True)
    ev.add_argument("--scenario", required=True, type=Path,
                    help="scenario file")
    ev.add_argument("--repetitions", type=int, default=50,
                    help="times to repeat every task (default 50)")
    ev.add_argument("--records", required=True, type=Path,
                    help="output JSONL records file")
    _add_retrieval_flags(ev)
    ev.add_argument("--bleu-max-n", type=int, default=None,
                    help="override the largest BLEU n-gram order")
    ev.add_argument("--synonyms", type=Path, default=None,
                    help="override the METEOR synonym table file")
    ev.add_argument("--parallel", action="store_true",
                    help="run independent subqueries concurrently")

    report = commands.add_parser("report", help="summarize run records")
    report.add_argument("--records", required=True, type=Path, nargs="+",
                        help="one or more JSONL records files")
    report.add_argument("--format", choices=REPORT_FORMATS, default="md",
                        help="output format (default md)")
    report.add_argument("--out", type=Path, default=None,
                        help="write the report here instead of stdout")
    return parser


def _load_registry(manifest: Path) -> Registry:
    return load_manifest(manifest)


def _cmd_kb_add(args: argparse.Namespace) -> int:
    registry = _load_registry(args.manifest) if args.manifest.exists() \
        else Registry()
    try:
        descriptor = KnowledgeBaseDescriptor(
            id=args.id, kind=args.kind, source_path=args.path.resolve(),
            human_summary=args.summary)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    registry = register_kb(descriptor, registry)
    save_manifest(registry, args.manifest)
    print(f"registered {args.id} ({args.kind}) in {args.manifest}")
    return 0


def _cmd_kb_list(args: argparse.Namespace) -> int:
    registry = _load_registry(args.manifest)
    for kb_id in registry.ids():
        d = registry.descriptor(kb_id)
        print(f"{d.id}\t{d.kind}\t{d.source_path}")
    return 0


def _cmd_kb_summary(args: argparse.Namespace) -> int:
    registry = _load_registry(args.manifest)
    print(build_summary(registry).to_json())
    return 0


def _pipeline_options(config: CliConfig,
                      args: argparse.Namespace) -> PipelineOptions:
    retrieval = config.retrieval
    overrides = {name: getattr(args, name) for name in
                 ("k", "chunk_tokens", "overlap_tokens", "k1", "b")
                 if getattr(args, name, None) is not None}
    if overrides:
        retrieval = dataclasses.replace(retrieval, **overrides)
        if retrieval.k < 1:
            raise ConfigError("--k must be >= 1")
        if retrieval.k1 < 0 or not 0 <= retrieval.b <= 1:
            raise ConfigError("--k1 must be >= 0 and --b within [0, 1]")
    return PipelineOptions(retrieval=retrieval,
                           parallel_retrieval=bool(getattr(args, "parallel",
                                                           False)))


def _metrics_options(config: CliConfig, args: argparse.Namespace):
    metrics = config.metrics
    if getattr(args, "bleu_max_n", None) is not None:
        if args.bleu_max_n < 1:
            raise ConfigError("--bleu-max-n must be >= 1")
        metrics = dataclasses.replace(metrics, bleu_max_n=args.bleu_max_n)
    if getattr(args, "synonyms", None) is not None:
        metrics = dataclasses.replace(
            metrics, synonyms=load_synonyms(args.synonyms))
    return metrics


def _trace_document(result) -> dict:
    entries = []
    for entry in result.context.entries:
        item: dict = {"kb": entry.kb_id, "query": entry.subquery}
        if entry.chunks is not None:
            item["chunks"] = [
                {"page": s.chunk.page, "start": s.chunk.start,
                 "end": s.chunk.end, "score": s.score}
                for s in entry.chunks]
        if entry.sql_text is not None:
            item["sql"] = entry.sql_text
            item["rows"] = entry.table_result.row_count
        entries.append(item)
    return {
        "plan": {"subqueries": [{"kb": s.kb_id, "query": s.text}
                                for s in result.plan.subqueries]},
        "retrieval": entries,
        "timings": result.stage_timings.to_dict(),
        "answer": result.text,
    }


def _cmd_ask(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    registry = _load_registry(config.manifest)
    client = client_for(config, args.model)
    options = _pipeline_options(config, args)
    result = answer(args.query, registry, client, options)
    if args.trace:
        print(json.dumps(_trace_document(result), indent=2, sort_keys=True,
                         ensure_ascii=False))
    else:
        print(result.text)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    registry = _load_registry(config.manifest)
    client = client_for(config, args.model)
    scenario = load_scenario(args.scenario)
    options = _pipeline_options(config, args)
    records = run_scenario(scenario, registry, client,
                           repetitions=args.repetitions, options=options,
                           metrics=_metrics_options(config, args))
    args.records.parent.mkdir(parents=True, exist_ok=True)
    write_records(args.records, records)
    errors = sum(1 for r in records if r.error is not None)
    print(f"wrote {len(records)} records to {args.records} "
          f"({errors} errored)")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    records = []
    for path in args.records:
        records.extend(read_records(path))
    text = render_report(aggregate(records), args.format)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    ("kb", "add"): _cmd_kb_add,
    ("kb", "list"): _cmd_kb_list,
    ("kb", "summary"): _cmd_kb_summary,
    ("ask", None): _cmd_ask,
    ("eval", None): _cmd_eval,
    ("report", None): _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")
    handler = _COMMANDS[(args.command, getattr(args, "kb_command", None))]
    try:
        return handler(args)
    except _SETUP_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except PipelineError as exc:
        print(f"error in {exc.stage} stage: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except CrossRagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
