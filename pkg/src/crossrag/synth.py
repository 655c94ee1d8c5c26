"""Answer synthesis over routed, retrieved context, and the full pipeline.

`answer` runs routing, retrieval, and synthesis, timing each stage with a
monotone clock. Stage durations credit each exchange with the latency the
backend reports, so a replay backend reproduces the recorded run's speed
while HTTP backends (whose reported latency is the measured wall time) are
unaffected.
"""
from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (
    CrossRagError,
    EmptyContextError,
    LlmError,
    RetrievalFailedError,
    SynthesisFailedError,
)
from .kb import Registry, TableSource, TextSource
from .llm import Prompt
from .router import RoutingPlan, route
from .sqlengine import QueryResult, execute_sql, generate_sql, print_sql
from .textsearch import RetrievalParams, ScoredChunk, retrieve_text, tokenize

SYNTH_MARKER = "provided context"


@dataclass(frozen=True)
class SubqueryResult:
    """What one subquery retrieved: chunks for text kbs, rows for tables."""

    kb_id: str
    subquery: str
    chunks: tuple[ScoredChunk, ...] | None = None
    table_result: QueryResult | None = None
    sql_text: str | None = None


@dataclass(frozen=True)
class RetrievedContext:
    entries: tuple[SubqueryResult, ...]


@dataclass(frozen=True)
class StageTimings:
    routing_s: float
    retrieval_s: float
    synthesis_s: float
    total_s: float

    def to_dict(self) -> dict:
        return {"routing_s": self.routing_s, "retrieval_s": self.retrieval_s,
                "synthesis_s": self.synthesis_s, "total_s": self.total_s}


@dataclass(frozen=True)
class Answer:
    text: str
    stage_timings: StageTimings
    plan: RoutingPlan
    context: RetrievedContext


@dataclass(frozen=True)
class PipelineOptions:
    retrieval: RetrievalParams = field(default_factory=RetrievalParams)
    retries: int = 2
    routing_max_tokens: int = 512
    sql_max_tokens: int = 256
    synthesis_max_tokens: int = 1024
    parallel_retrieval: bool = False


class _TimingClient:
    """Per-pipeline-run wrapper that accumulates reported-vs-measured skew."""

    def __init__(self, inner) -> None:
        self._inner = inner
        self._lock = threading.Lock()
        self._adjustment = 0.0

    @property
    def model_id(self) -> str:
        return self._inner.model_id

    def chat(self, system_text: str, user_text: str, temperature: float = 0.0,
             max_tokens: int = 1024):
        started = time.perf_counter()
        response = self._inner.chat(system_text, user_text,
                                    temperature=temperature,
                                    max_tokens=max_tokens)
        measured = time.perf_counter() - started
        with self._lock:
            self._adjustment += response.latency_s - measured
        return response

    def take_adjustment(self) -> float:
        with self._lock:
            value = self._adjustment
            self._adjustment = 0.0
        return value


# --- context serialization ------------------------------------------------------

def _chunk_block(kb_id: str, scored: ScoredChunk) -> str:
    chunk = scored.chunk
    return f"[kb: {kb_id}, page {chunk.page}]\n{chunk.text}"


def _table_block(entry: SubqueryResult, dropped_rows: int = 0) -> str:
    result = entry.table_result
    header = f"[kb: {entry.kb_id}, table rows for: {entry.subquery}]"
    if result.row_count == 0:
        return f"{header}\n(no matching rows)"
    shown = result.rows[:result.row_count - dropped_rows] \
        if dropped_rows else result.rows
    body = QueryResult(headers=result.headers, rows=shown).to_text()
    if dropped_rows:
        body += f"\n... ({dropped_rows} rows truncated)"
    return f"{header}\n{body}"


def render_context(context: RetrievedContext,
                   budget_tokens: int | None = None) -> str:
    """Serialize retrieval results in plan order.

    Chunks appear verbatim with kb/page attribution; table results appear as
    aligned plain-text tables, with a "(no matching rows)" marker when empty.
    When a token budget is given, the lowest-scored chunks are dropped first
    (across all entries), then whole trailing table rows; a table row is
    never cut in half.
    """
    if not context.entries:
        raise EmptyContextError("no retrieval results to serialize")

    dropped_chunks: set[tuple[int, int]] = set()
    dropped_rows: dict[int, int] = {}

    def build() -> str:
        blocks = []
        for e_idx, entry in enumerate(context.entries):
            if entry.chunks is not None:
                for c_idx, scored in enumerate(entry.chunks):
                    if (e_idx, c_idx) not in dropped_chunks:
                        blocks.append(_chunk_block(entry.kb_id, scored))
            if entry.table_result is not None:
                blocks.append(_table_block(entry, dropped_rows.get(e_idx, 0)))
        return "\n\n".join(blocks)

    text = build()
    if budget_tokens is None:
        return text
    while len(tokenize(text)) > budget_tokens:
        # lowest-scored chunk anywhere, later entries first on ties
        candidates = [
            (entry.chunks[c_idx].score, -e_idx, -c_idx, e_idx, c_idx)
            for e_idx, entry in enumerate(context.entries)
            if entry.chunks is not None
            for c_idx in range(len(entry.chunks))
            if (e_idx, c_idx) not in dropped_chunks
        ]
        if candidates:
            _, _, _, e_idx, c_idx = min(candidates)
            dropped_chunks.add((e_idx, c_idx))
            text = build()
            continue
        row_candidates = [
            e_idx for e_idx, entry in enumerate(context.entries)
            if entry.table_result is not None
            and entry.table_result.row_count - dropped_rows.get(e_idx, 0) > 0
        ]
        if not row_candidates:
            break  # nothing droppable is left; emit what remains
        e_idx = row_candidates[-1]
        dropped_rows[e_idx] = dropped_rows.get(e_idx, 0) + 1
        text = build()
    return text


def build_synthesis_prompt(query: str, context: RetrievedContext,
                           max_tokens: int = 1024) -> Prompt:
    """Prompt holding the serialized context, budgeted to max_tokens / 2."""
    context_text = render_context(context, budget_tokens=max_tokens // 2)
    system_text = (
        "Answer the user's question using only the provided context. If the\n"
        "context does not contain the answer, say that it does not. Mention\n"
        "knowledge base ids only when they help the reader.\n"
        "\n"
        "Context:\n"
        f"{context_text}"
    )
    return Prompt(system_text=system_text, user_text=query)


# --- pipeline -------------------------------------------------------------------

def _retrieve_one(subquery, registry: Registry, llm,
                  options: PipelineOptions) -> SubqueryResult:
    item = registry.get(subquery.kb_id)
    if isinstance(item.payload, TextSource):
        try:
            chunks = retrieve_text(subquery.text, item.descriptor,
                                   options.retrieval.k,
                                   pages=item.payload.pages,
                                   params=options.retrieval)
        except CrossRagError as exc:
            raise RetrievalFailedError(
                f"kb {subquery.kb_id!r}: {exc}", cause=exc) from exc
        return SubqueryResult(kb_id=subquery.kb_id, subquery=subquery.text,
                              chunks=tuple(chunks))
    payload: TableSource = item.payload
    query = generate_sql(subquery.text, payload.preview, subquery.kb_id, llm,
                         retries=options.retries,
                         max_tokens=options.sql_max_tokens)
    try:
        result = execute_sql(query, payload.table)
    except CrossRagError as exc:
        raise RetrievalFailedError(
            f"kb {subquery.kb_id!r}: {exc}", cause=exc) from exc
    return SubqueryResult(kb_id=subquery.kb_id, subquery=subquery.text,
                          table_result=result, sql_text=print_sql(query))


def answer(query: str, registry: Registry, llm,
           options: PipelineOptions = PipelineOptions()) -> Answer:
    """Route, retrieve, and synthesize one answer with stage timings."""
    timing = _TimingClient(llm)
    total_started = time.perf_counter()

    stage_started = time.perf_counter()
    plan = route(query, registry, timing, retries=options.retries,
                 max_tokens=options.routing_max_tokens)
    routing_adj = timing.take_adjustment()
    routing_s = max(0.0, (time.perf_counter() - stage_started) + routing_adj)

    stage_started = time.perf_counter()
    if options.parallel_retrieval and len(plan.subqueries) > 1:
        with ThreadPoolExecutor(max_workers=len(plan.subqueries)) as pool:
            futures = [pool.submit(_retrieve_one, s, registry, timing, options)
                       for s in plan.subqueries]
            results = [f.result() for f in futures]
    else:
        results = [_retrieve_one(s, registry, timing, options)
                   for s in plan.subqueries]
    context = RetrievedContext(entries=tuple(results))
    retrieval_adj = timing.take_adjustment()
    retrieval_s = max(0.0, (time.perf_counter() - stage_started) + retrieval_adj)

    stage_started = time.perf_counter()
    prompt = build_synthesis_prompt(query, context,
                                    max_tokens=options.synthesis_max_tokens)
    try:
        response = timing.chat(prompt.system_text, prompt.user_text,
                               temperature=0.0,
                               max_tokens=options.synthesis_max_tokens)
    except LlmError as exc:
        raise SynthesisFailedError(str(exc), cause=exc) from exc
    synthesis_adj = timing.take_adjustment()
    synthesis_s = max(0.0, (time.perf_counter() - stage_started) + synthesis_adj)

    # total wall time plus the same latency credits the stages received,
    # floored at the stage sum so total >= sum of stages always holds
    total_wall = time.perf_counter() - total_started
    total_s = max(total_wall + routing_adj + retrieval_adj + synthesis_adj,
                  routing_s + retrieval_s + synthesis_s)
    timings = StageTimings(routing_s=routing_s, retrieval_s=retrieval_s,
                           synthesis_s=synthesis_s, total_s=total_s)
    return Answer(text=response.text, stage_timings=timings, plan=plan,
                  context=context)
