"""Multi-path routing: turn one query into validated per-kb subqueries.

The model sees the knowledge-base summary and must answer with a single JSON
object {"subqueries": [{"kb": "<id>", "query": "<text>"}, ...]}. Extraction
is tolerant of surrounding prose and code fences: the first balanced JSON
object in the completion is used.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import (
    EmptyPlanError,
    EmptyQueryError,
    LlmError,
    NoJsonFoundError,
    RoutingFailedError,
    SchemaMismatchError,
    UnknownKbError,
)
from .kb import KnowledgeBaseSummary, Registry, build_summary
from .llm import Prompt

ROUTING_MARKER = "subqueries"


@dataclass(frozen=True)
class Subquery:
    kb_id: str
    text: str


@dataclass(frozen=True)
class RoutingPlan:
    subqueries: tuple[Subquery, ...]


def serialize_plan(plan: RoutingPlan) -> str:
    """Wire form: {"subqueries": [{"kb": ..., "query": ...}]}."""
    document = {"subqueries": [{"kb": s.kb_id, "query": s.text}
                               for s in plan.subqueries]}
    return json.dumps(document, ensure_ascii=False)


def build_routing_prompt(query: str,
                         summary: KnowledgeBaseSummary) -> Prompt:
    """Prompt embedding the registry summary and the required output schema."""
    if not query.strip():
        raise EmptyQueryError("query must be non-empty")
    system_text = (
        "You are the query router for a maintenance assistant. Split the\n"
        "user's question into subqueries, one per knowledge base that can\n"
        "contribute to the answer.\n"
        "\n"
        "Available knowledge bases (JSON summary):\n"
        f"{summary.to_json()}\n"
        "\n"
        "Respond with ONLY a JSON object, no prose, of this exact shape:\n"
        '{"subqueries": [{"kb": "<knowledge base id>", "query": "<subquery text>"}]}\n'
        "\n"
        'Every "kb" value must be one of the registered ids above. Emit at\n'
        "least one subquery."
    )
    return Prompt(system_text=system_text, user_text=query)


def _balanced_object(raw: str, start: int) -> str | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(raw)):
        ch = raw[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return raw[start:i + 1]
    return None


def extract_first_json_object(raw: str) -> dict:
    """The first balanced {...} in `raw` that parses as JSON."""
    for start, ch in enumerate(raw):
        if ch != "{":
            continue
        candidate = _balanced_object(raw, start)
        if candidate is None:
            continue
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    raise NoJsonFoundError("completion contains no JSON object")


def parse_routing_plan(raw: str) -> RoutingPlan:
    """Extract and shape-check a routing plan from a model completion."""
    document = extract_first_json_object(raw)
    if "subqueries" not in document:
        raise SchemaMismatchError('missing "subqueries" key')
    items = document["subqueries"]
    if not isinstance(items, list):
        raise SchemaMismatchError('"subqueries" must be an array')
    if not items:
        raise SchemaMismatchError('"subqueries" must be non-empty')
    subqueries = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise SchemaMismatchError(f"subquery {i} must be an object")
        kb = item.get("kb")
        query = item.get("query")
        if not isinstance(kb, str) or not kb:
            raise SchemaMismatchError(f'subquery {i}: "kb" must be a non-empty string')
        if not isinstance(query, str) or not query.strip():
            raise SchemaMismatchError(
                f'subquery {i}: "query" must be a non-empty string')
        subqueries.append(Subquery(kb_id=kb, text=query))
    return RoutingPlan(subqueries=tuple(subqueries))


def validate_plan(plan: RoutingPlan, registry: Registry) -> RoutingPlan:
    """Check kb ids and drop exact duplicate (kb, query) pairs, keeping order."""
    if not plan.subqueries:
        raise EmptyPlanError("plan has no subqueries")
    seen = set()
    kept = []
    for subquery in plan.subqueries:
        if subquery.kb_id not in registry:
            raise UnknownKbError(subquery.kb_id)
        key = (subquery.kb_id, subquery.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(subquery)
    return RoutingPlan(subqueries=tuple(kept))


def route(query: str, registry: Registry, llm, retries: int = 2,
          max_tokens: int = 512) -> RoutingPlan:
    """Build the prompt, call the model, parse, and validate.

    Performs at most 1 + retries completions (a fresh one per attempt) and
    raises RoutingFailedError carrying the last failure when all attempts
    produce unusable plans.
    """
    summary = build_summary(registry)
    prompt = build_routing_prompt(query, summary)
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = llm.chat(prompt.system_text, prompt.user_text,
                                temperature=0.0, max_tokens=max_tokens)
            plan = parse_routing_plan(response.text)
            return validate_plan(plan, registry)
        except (NoJsonFoundError, SchemaMismatchError, UnknownKbError,
                EmptyPlanError, LlmError) as exc:
            last_error = exc
    raise RoutingFailedError(
        f"no valid plan after {retries + 1} attempts: {last_error}",
        cause=last_error)
