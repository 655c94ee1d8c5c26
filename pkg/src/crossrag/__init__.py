"""Cross-format retrieval-augmented question answering.

One natural-language question is routed into per-source subqueries,
answered from free text via ranked chunk retrieval and from CSV tables
via a validated SQL subset, then synthesized into a single reply. The
harness scores answers (BLEU, METEOR, length ratio), classifies outcomes
against rubrics, and renders aggregate reports.
"""
from __future__ import annotations

from .errors import CrossRagError
from .harness import (
    AggregateRow,
    MetricsOptions,
    RunRecord,
    Scenario,
    Task,
    aggregate,
    load_scenario,
    read_records,
    render_report,
    run_scenario,
    run_task,
    validate_scenario,
    write_records,
)
from .kb import (
    KnowledgeBaseDescriptor,
    KnowledgeBaseSummary,
    Registry,
    build_summary,
    load_manifest,
    register_kb,
    save_manifest,
)
from .llm import ChatRequest, ChatResponse, LlmClient, ProviderConfig, ScriptedRule
from .metrics import (
    MetricScores,
    OutcomeCategory,
    Pattern,
    Rubric,
    bleu,
    classify,
    length_ratio,
    meteor,
    score_answer,
)
from .router import RoutingPlan, Subquery, route
from .sqlengine import (
    SqlQuery,
    execute_sql,
    extract_sql,
    generate_sql,
    parse_sql,
    print_sql,
    validate_sql,
)
from .synth import Answer, PipelineOptions, RetrievedContext, answer
from .textsearch import Chunk, RetrievalParams, ScoredChunk, retrieve_text, tokenize

__version__ = "0.1.0"

__all__ = [
    "AggregateRow", "Answer", "ChatRequest", "ChatResponse", "Chunk",
    "CrossRagError", "KnowledgeBaseDescriptor", "KnowledgeBaseSummary",
    "LlmClient", "MetricScores", "MetricsOptions", "OutcomeCategory",
    "Pattern", "PipelineOptions", "ProviderConfig", "Registry",
    "RetrievalParams", "RetrievedContext", "RoutingPlan", "Rubric",
    "RunRecord", "Scenario", "ScoredChunk", "ScriptedRule", "SqlQuery",
    "Subquery", "Task", "aggregate", "answer", "bleu", "build_summary",
    "classify", "execute_sql", "extract_sql", "generate_sql",
    "length_ratio", "load_manifest", "load_scenario", "meteor", "parse_sql",
    "print_sql", "read_records", "register_kb", "render_report",
    "retrieve_text", "route", "run_scenario", "run_task", "save_manifest",
    "score_answer", "tokenize", "validate_scenario", "validate_sql",
    "write_records", "__version__",
]
