"""
The full pipeline, offline
==========================

One question crosses a text manual and an inventory table: the router
splits it, each knowledge base answers its part, and synthesis merges the
retrieved context. A scripted model stands in for the real one, and the
exchange is recorded so a replay run reproduces it without any backend.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from crossrag.kb import KnowledgeBaseDescriptor, register_kb
from crossrag.llm import LlmClient, ProviderConfig, ScriptedRule
from crossrag.synth import answer

workdir = Path(tempfile.mkdtemp(prefix="crossrag-demo-"))

manual = workdir / "manual.txt"
manual.write_text(
    "To replace filter F-200: shut the inlet valve, release pressure at "
    "the bleed port, then swap the element and re-seat the housing.",
    encoding="utf-8")
inventory = workdir / "inventory.csv"
inventory.write_text(
    "part_id,description,quantity\n"
    "F-200,hydraulic filter element,14\n"
    "P-3,coolant pump assembly,2\n",
    encoding="utf-8")

registry = register_kb(KnowledgeBaseDescriptor(
    id="manual", kind="text", source_path=manual,
    human_summary="filter service manual"))
registry = register_kb(KnowledgeBaseDescriptor(
    id="inventory", kind="table", source_path=inventory,
    human_summary="spare part stock"), registry)

# Scripted rules dispatch on the prompts each stage sends: the router asks
# for a JSON plan, SQL generation asks for a SELECT, synthesis hands over
# the assembled context. First matching rule wins.
plan_json = ('{"subqueries": ['
             '{"kb": "manual", "query": "F-200 filter replacement steps"}, '
             '{"kb": "inventory", "query": "F-200 stock level"}]}')
rules = (
    ScriptedRule(system_contains="query router", response=plan_json),
    ScriptedRule(system_contains="SQL SELECT statement",
                 response="SELECT quantity FROM inventory "
                          "WHERE part_id = 'F-200'"),
    ScriptedRule(system_contains="provided context",
                 response="Shut the inlet valve, release pressure at the "
                          "bleed port, swap the element. 14 in stock."),
)

# record_path captures every exchange as fingerprinted JSONL.
replay_file = workdir / "exchanges.jsonl"
client = LlmClient(ProviderConfig(backend="scripted", rules=rules,
                                  record_path=replay_file), "demo-model")

query = "How do I replace the F-200 filter, and how many are in stock?"
result = answer(query, registry, client)

print("plan:")
for sub in result.plan.subqueries:
    print(f"  {sub.kb_id}: {sub.text}")

print("\nretrieved:")
for entry in result.context.entries:
    if entry.chunks is not None:
        for scored in entry.chunks:
            print(f"  [{entry.kb_id} page {scored.chunk.page}, "
                  f"bm25 {scored.score:.2f}] {scored.chunk.text[:46]}...")
    else:
        print(f"  [{entry.kb_id}] {entry.sql_text} -> {entry.table_result.rows}")

print("\nanswer:", result.text)
t = result.stage_timings
print(f"timings: routing {t.routing_s:.3f}s, retrieval {t.retrieval_s:.3f}s, "
      f"synthesis {t.synthesis_s:.3f}s, total {t.total_s:.3f}s")
print("llm calls:", client.calls, f"(recorded to {replay_file.name})")

# The replay backend serves those recordings back by fingerprint; the
# scripted rules are gone and the run still produces the same answer.
replayer = LlmClient(ProviderConfig(backend="replay",
                                    replay_path=replay_file), "demo-model")
replayed = answer(query, registry, replayer)
assert replayed.text == result.text
assert replayed.plan == result.plan
print("\nreplay reproduced the answer with no scripted rules.")
