"""Query routing: JSON extraction, plan validation, and the retry loop."""
from __future__ import annotations

import json

import pytest

from crossrag.errors import (
    EmptyPlanError,
    EmptyQueryError,
    LlmError,
    NoJsonFoundError,
    RoutingFailedError,
    SchemaMismatchError,
    UnknownKbError,
)
from crossrag.kb import build_summary
from crossrag.llm import ChatResponse
from crossrag.router import (
    RoutingPlan,
    Subquery,
    build_routing_prompt,
    extract_first_json_object,
    parse_routing_plan,
    route,
    serialize_plan,
    validate_plan,
)

PLAN_JSON = '{"subqueries": [{"kb": "manual", "query": "torque spec"}]}'


class _StubLlm:
    """Returns canned completions in order; repeats the last one."""

    def __init__(self, *texts: str):
        self.texts = list(texts)
        self.calls = 0

    def chat(self, system_text, user_text, *, temperature=0.0,
             max_tokens=256) -> ChatResponse:
        text = self.texts[min(self.calls, len(self.texts) - 1)]
        self.calls += 1
        if text == "<raise>":
            raise LlmError("backend unavailable")
        return ChatResponse(text=text, latency_s=0.0)


# --- extract_first_json_object ----------------------------------------------------


def test_extract_plain_object():
    assert extract_first_json_object('{"a": 1}') == {"a": 1}


def test_extract_ignores_surrounding_prose():
    raw = "Sure! Here is the plan:\n" + PLAN_JSON + "\nHope that helps."
    assert extract_first_json_object(raw) == json.loads(PLAN_JSON)


def test_extract_inside_code_fence():
    raw = "```json\n" + PLAN_JSON + "\n```"
    assert extract_first_json_object(raw) == json.loads(PLAN_JSON)


def test_extract_takes_first_of_several():
    raw = '{"first": 1} {"second": 2}'
    assert extract_first_json_object(raw) == {"first": 1}


def test_extract_braces_inside_strings_do_not_confuse_balance():
    raw = '{"query": "find the { and } chars"} trailing'
    assert extract_first_json_object(raw) == {"query": "find the { and } chars"}


def test_extract_escaped_quote_inside_string():
    raw = '{"query": "a \\" b"}'
    assert extract_first_json_object(raw) == {"query": 'a " b'}


def test_extract_skips_unparseable_balanced_run():
    raw = "{not json} " + PLAN_JSON
    assert extract_first_json_object(raw) == json.loads(PLAN_JSON)


def test_extract_recovers_from_unbalanced_prefix():
    # The outer "{" never closes; the nested object is still found.
    raw = '{oops {"a": 1}'
    assert extract_first_json_object(raw) == {"a": 1}


@pytest.mark.parametrize("raw", ["", "no braces here", "{ broken", "}{"])
def test_extract_no_object_raises(raw):
    with pytest.raises(NoJsonFoundError):
        extract_first_json_object(raw)


# --- parse_routing_plan ------------------------------------------------------------


def test_parse_happy_path():
    plan = parse_routing_plan(PLAN_JSON)
    assert plan == RoutingPlan(
        subqueries=(Subquery(kb_id="manual", text="torque spec"),))


def test_parse_tolerates_prose_wrapper():
    plan = parse_routing_plan("The answer: " + PLAN_JSON + " done")
    assert plan.subqueries[0].kb_id == "manual"


@pytest.mark.parametrize("raw, fragment", [
    ('{"plan": []}', "subqueries"),
    ('{"subqueries": "manual"}', "array"),
    ('{"subqueries": []}', "non-empty"),
    ('{"subqueries": ["manual"]}', "object"),
    ('{"subqueries": [{"query": "q"}]}', '"kb"'),
    ('{"subqueries": [{"kb": 3, "query": "q"}]}', '"kb"'),
    ('{"subqueries": [{"kb": "", "query": "q"}]}', '"kb"'),
    ('{"subqueries": [{"kb": "manual"}]}', '"query"'),
    ('{"subqueries": [{"kb": "manual", "query": "  "}]}', '"query"'),
])
def test_parse_schema_mismatch(raw, fragment):
    with pytest.raises(SchemaMismatchError, match=fragment):
        parse_routing_plan(raw)


def test_parse_reports_offending_index():
    raw = ('{"subqueries": [{"kb": "a", "query": "ok"},'
           ' {"kb": "b", "query": ""}]}')
    with pytest.raises(SchemaMismatchError, match="subquery 1"):
        parse_routing_plan(raw)


# --- serialize_plan ----------------------------------------------------------------


def test_serialize_round_trips():
    plan = RoutingPlan(subqueries=(
        Subquery(kb_id="manual", text="seal replacement"),
        Subquery(kb_id="inventory", text="F-200 stock"),
    ))
    assert parse_routing_plan(serialize_plan(plan)) == plan


def test_serialize_keeps_unicode_readable():
    plan = RoutingPlan(subqueries=(Subquery(kb_id="manual", text="café §4"),))
    wire = serialize_plan(plan)
    assert "café §4" in wire
    assert parse_routing_plan(wire) == plan


# --- validate_plan -----------------------------------------------------------------


def test_validate_accepts_known_kbs(registry):
    plan = parse_routing_plan(PLAN_JSON)
    assert validate_plan(plan, registry) == plan


def test_validate_unknown_kb(registry):
    plan = RoutingPlan(subqueries=(Subquery(kb_id="wiki", text="q"),))
    with pytest.raises(UnknownKbError, match="wiki"):
        validate_plan(plan, registry)


def test_validate_drops_exact_duplicates_keeps_order(registry):
    plan = RoutingPlan(subqueries=(
        Subquery(kb_id="manual", text="a"),
        Subquery(kb_id="inventory", text="b"),
        Subquery(kb_id="manual", text="a"),
        Subquery(kb_id="manual", text="c"),
    ))
    kept = validate_plan(plan, registry)
    assert [(s.kb_id, s.text) for s in kept.subqueries] == [
        ("manual", "a"), ("inventory", "b"), ("manual", "c")]


def test_validate_keeps_near_duplicates(registry):
    # Same text on different kbs and same kb with different text both stay.
    plan = RoutingPlan(subqueries=(
        Subquery(kb_id="manual", text="a"),
        Subquery(kb_id="inventory", text="a"),
        Subquery(kb_id="manual", text="b"),
    ))
    assert len(validate_plan(plan, registry).subqueries) == 3


def test_validate_empty_plan(registry):
    with pytest.raises(EmptyPlanError):
        validate_plan(RoutingPlan(subqueries=()), registry)


# --- build_routing_prompt ----------------------------------------------------------


def test_prompt_embeds_summary_and_schema(registry):
    summary = build_summary(registry)
    prompt = build_routing_prompt("Why is M-3 hot?", summary)
    assert summary.to_json() in prompt.system_text
    assert '{"subqueries": [{"kb":' in prompt.system_text
    assert "query router" in prompt.system_text
    assert prompt.user_text == "Why is M-3 hot?"


@pytest.mark.parametrize("query", ["", "   ", "\n\t"])
def test_prompt_rejects_blank_query(query, registry):
    with pytest.raises(EmptyQueryError):
        build_routing_prompt(query, build_summary(registry))


# --- route -------------------------------------------------------------------------


def test_route_happy_path_single_call(registry):
    stub = _StubLlm(PLAN_JSON)
    plan = route("Why is M-3 hot?", registry, stub)
    assert stub.calls == 1
    assert plan.subqueries == (Subquery(kb_id="manual", text="torque spec"),)


def test_route_retries_after_garbage(registry):
    stub = _StubLlm("no json at all", PLAN_JSON)
    plan = route("Why is M-3 hot?", registry, stub)
    assert stub.calls == 2
    assert plan.subqueries[0].kb_id == "manual"


def test_route_retries_after_unknown_kb(registry):
    bad = '{"subqueries": [{"kb": "wiki", "query": "q"}]}'
    stub = _StubLlm(bad, PLAN_JSON)
    assert route("q?", registry, stub).subqueries[0].kb_id == "manual"
    assert stub.calls == 2


def test_route_retries_after_llm_error(registry):
    stub = _StubLlm("<raise>", PLAN_JSON)
    assert route("q?", registry, stub).subqueries[0].kb_id == "manual"
    assert stub.calls == 2


def test_route_gives_up_with_last_error(registry):
    stub = _StubLlm("still not json")
    with pytest.raises(RoutingFailedError) as info:
        route("q?", registry, stub, retries=2)
    assert stub.calls == 3
    assert info.value.stage == "routing"
    assert isinstance(info.value.cause, NoJsonFoundError)
    assert "3 attempts" in str(info.value)


def test_route_retries_zero_means_one_attempt(registry):
    stub = _StubLlm("nope")
    with pytest.raises(RoutingFailedError):
        route("q?", registry, stub, retries=0)
    assert stub.calls == 1


def test_route_with_scripted_client(registry, scripted_client):
    plan = route("How do I replace the F-200 filter?", registry,
                 scripted_client)
    assert plan.subqueries == (
        Subquery(kb_id="manual", text="filter F-200 replacement steps"),)
