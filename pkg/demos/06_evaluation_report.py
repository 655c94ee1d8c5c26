"""
Evaluation runs and reports
===========================

A scenario is a list of tasks: query, reference answer, rubric, and the
knowledge bases the task is allowed to touch. The harness runs each task,
classifies the outcome, and aggregates everything into a report. Scripted
rules play the model so the whole run is deterministic.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from crossrag.harness import (
    MetricsOptions,
    Scenario,
    Task,
    aggregate,
    read_records,
    render_report,
    run_scenario,
    write_records,
)
from crossrag.kb import KnowledgeBaseDescriptor, register_kb
from crossrag.llm import LlmClient, ProviderConfig, ScriptedRule
from crossrag.metrics import Pattern, Rubric

workdir = Path(tempfile.mkdtemp(prefix="crossrag-demo-"))

manual = workdir / "manual.txt"
manual.write_text(
    "Torque the housing bolts to 25 Nm in a cross pattern. Clean the seal "
    "seat with solvent before fitting a new seal.", encoding="utf-8")
inventory = workdir / "inventory.csv"
inventory.write_text("part_id,quantity\nF-200,14\nP-3,2\n", encoding="utf-8")

registry = register_kb(KnowledgeBaseDescriptor(
    id="manual", kind="text", source_path=manual, human_summary="manual"))
registry = register_kb(KnowledgeBaseDescriptor(
    id="inventory", kind="table", source_path=inventory,
    human_summary="stock"), registry)

# Four tasks designed to land in four different outcome buckets. The last
# one has no routing rule at all, so its pipeline run fails.
scenario = Scenario(scenario_id="demo", tasks=(
    Task(query="What torque for the housing bolts?",
         reference="Torque the housing bolts to 25 Nm in a cross pattern.",
         rubric=Rubric(required=(Pattern("substring", "25 Nm"),
                                 Pattern("substring", "cross pattern"))),
         kb_ids=("manual",)),
    Task(query="How many F-200 filters are in stock?",
         reference="There are 14 F-200 filter elements in stock.",
         rubric=Rubric(required=(Pattern("substring", "14"),),
                       bonus=(Pattern("substring", "reorder"),)),
         kb_ids=("inventory",)),
    Task(query="How do I fit a new seal?",
         reference="Clean the seal seat with solvent, then fit the seal.",
         rubric=Rubric(required=(Pattern("substring", "seal"),
                                 Pattern("substring", "solvent"))),
         kb_ids=("manual",)),
    Task(query="What is the warranty period?",
         reference="The warranty period is two years.",
         rubric=Rubric(required=(Pattern("substring", "two years"),)),
         kb_ids=("manual",)),
))

def plan(kb: str, sub: str) -> str:
    return '{"subqueries": [{"kb": "%s", "query": "%s"}]}' % (kb, sub)

rules = (
    ScriptedRule(system_contains="query router", contains="torque",
                 response=plan("manual", "housing bolt torque")),
    ScriptedRule(system_contains="query router", contains="stock",
                 response=plan("inventory", "F-200 quantity")),
    ScriptedRule(system_contains="query router", contains="seal",
                 response=plan("manual", "seal fitting")),
    ScriptedRule(system_contains="SQL SELECT statement",
                 response="SELECT quantity FROM inventory "
                          "WHERE part_id = 'F-200'"),
    # Synthesis replies: exact, correct-plus-extra, and missing a fact.
    ScriptedRule(system_contains="provided context", contains="torque",
                 response="Torque the housing bolts to 25 Nm "
                          "in a cross pattern."),
    ScriptedRule(system_contains="provided context", contains="stock",
                 response="14 in stock; reorder below 5."),
    ScriptedRule(system_contains="provided context", contains="seal",
                 response="Fit the new seal after cleaning the seat."),
)
client = LlmClient(ProviderConfig(backend="scripted", rules=rules),
                   "demo-model")

records = run_scenario(scenario, registry, client, repetitions=2,
                       metrics=MetricsOptions())
for r in records[:4]:
    print(f"task {r.task} rep {r.repetition}: {r.outcome:30s}"
          f" error={r.error}")

# Records persist as one canonical JSON object per line.
records_file = workdir / "records.jsonl"
write_records(records_file, records)
loaded = read_records(records_file)
print(f"\nwrote and re-read {len(loaded)} records")

# Aggregation groups by (model, scenario): metric means skip failed runs,
# the outcome distribution is integer percentages that sum to 100.
rows = aggregate(loaded)
print("\n" + render_report(rows, fmt="md"))
print(render_report(rows, fmt="csv"))
