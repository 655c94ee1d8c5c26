"""Evaluation harness: scenarios, run records, aggregation, and reports.

A scenario file lists tasks (query, reference answer, rubric, target
knowledge bases). Running a scenario produces one JSONL record per task
per repetition; aggregation groups records by (model, scenario) and a
report renders the grouped summary as markdown, JSON, or long-form CSV.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import (
    CrossRagError,
    NoRecordsError,
    RecordsError,
    ScenarioError,
    UnknownKbError,
)
from .kb import Registry, canonical_json
from .metrics import (
    OUTCOME_ORDER,
    SUCCESS_OUTCOMES,
    OutcomeCategory,
    Rubric,
    classify,
    score_answer,
)
from .synth import PipelineOptions, answer
from .textsearch import tokenize

log = logging.getLogger(__name__)

SCENARIO_CLASSES = ("A", "B", "C")


@dataclass(frozen=True)
class Task:
    query: str
    reference: str
    rubric: Rubric
    kb_ids: tuple[str, ...]


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    tasks: tuple[Task, ...]


@dataclass(frozen=True)
class MetricsOptions:
    bleu_max_n: int = 4
    synonyms: dict[str, list[str]] | None = None


def _require(condition: bool, where: str, message: str) -> None:
    if not condition:
        raise ScenarioError(f"{where}: {message}")


def load_scenario(path: str | Path) -> Scenario:
    """Load and statically validate a scenario file.

    Format: {"id": ..., "tasks": [{"query", "reference", "rubric_path",
    "kbs"}]}. Rubric paths resolve relative to the scenario file. Checks
    that need the registry (kb existence, kind mix) happen in
    validate_scenario.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    except ValueError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc

    where = str(path)
    _require(isinstance(raw, dict), where, "top level must be an object")
    extra = raw.keys() - {"id", "tasks"}
    _require(not extra, where, f"unknown keys: {sorted(extra)}")
    scenario_id = raw.get("id")
    _require(isinstance(scenario_id, str) and bool(scenario_id), where,
             "id must be a non-empty string")
    tasks_raw = raw.get("tasks")
    _require(isinstance(tasks_raw, list) and tasks_raw, where,
             "tasks must be a non-empty array")

    tasks = []
    for index, item in enumerate(tasks_raw):
        t_where = f"{where} task {index}"
        _require(isinstance(item, dict), t_where, "task must be an object")
        extra = item.keys() - {"query", "reference", "rubric_path", "kbs"}
        _require(not extra, t_where, f"unknown keys: {sorted(extra)}")
        for key in ("query", "reference", "rubric_path"):
            _require(isinstance(item.get(key), str) and item[key],
                     t_where, f"{key} must be a non-empty string")
        _require(bool(item["query"].strip()), t_where, "query is blank")
        _require(bool(tokenize(item["reference"])), t_where,
                 "reference must contain at least one token")
        kb_ids = item.get("kbs")
        _require(isinstance(kb_ids, list) and kb_ids
                 and all(isinstance(k, str) and k for k in kb_ids),
                 t_where, "kbs must be a non-empty array of kb ids")
        rubric_path = (path.parent / item["rubric_path"]).resolve()
        try:
            rubric_raw = json.loads(rubric_path.read_text(encoding="utf-8"))
            rubric = Rubric.from_dict(rubric_raw)
        except OSError as exc:
            raise ScenarioError(f"{t_where}: cannot read rubric "
                                f"{rubric_path}: {exc}") from exc
        except ValueError as exc:
            raise ScenarioError(f"{t_where}: bad rubric "
                                f"{rubric_path}: {exc}") from exc
        tasks.append(Task(query=item["query"], reference=item["reference"],
                          rubric=rubric, kb_ids=tuple(kb_ids)))
    return Scenario(scenario_id=scenario_id, tasks=tuple(tasks))


def validate_scenario(scenario: Scenario, registry: Registry) -> None:
    """Check each task's declared knowledge bases against the scenario class.

    Class A tasks may only target text sources, class B only tables, and
    class C tasks must each target at least one of both kinds. Scenarios
    with custom ids only get the kb-existence check.
    """
    for index, task in enumerate(scenario.tasks):
        kinds = []
        for kb_id in task.kb_ids:
            try:
                kinds.append(registry.kind(kb_id))
            except UnknownKbError:
                raise ScenarioError(
                    f"task {index}: unknown knowledge base {kb_id!r}")
        where = f"scenario {scenario.scenario_id} task {index}"
        if scenario.scenario_id == "A":
            _require(all(k == "text" for k in kinds), where,
                     "class A allows only text knowledge bases")
        elif scenario.scenario_id == "B":
            _require(all(k == "table" for k in kinds), where,
                     "class B allows only table knowledge bases")
        elif scenario.scenario_id == "C":
            _require("text" in kinds and "table" in kinds, where,
                     "class C needs at least one text and one table kb")


# --- run records ----------------------------------------------------------------

_RECORD_KEYS = {"model", "scenario", "task", "repetition", "outcome",
                "scores", "latency_s", "stages", "answer", "error"}


@dataclass(frozen=True)
class RunRecord:
    model: str
    scenario: str
    task: int                       # 0-based task index in scenario order
    repetition: int                 # 1-based repetition number
    outcome: str
    scores: dict | None             # bleu / meteor / length_ratio, None on error
    latency_s: float
    stages: dict | None
    answer: str | None
    error: str | None

    def to_dict(self) -> dict:
        return {"model": self.model, "scenario": self.scenario,
                "task": self.task, "repetition": self.repetition,
                "outcome": self.outcome, "scores": self.scores,
                "latency_s": self.latency_s, "stages": self.stages,
                "answer": self.answer, "error": self.error}

    @staticmethod
    def from_dict(raw: dict) -> "RunRecord":
        if raw.keys() != _RECORD_KEYS:
            missing = sorted(_RECORD_KEYS - raw.keys())
            extra = sorted(raw.keys() - _RECORD_KEYS)
            raise RecordsError(
                f"bad record keys (missing {missing}, extra {extra})")
        return RunRecord(**raw)


def run_task(task: Task, registry: Registry, llm, *, scenario_id: str,
             task_index: int, repetition: int,
             options: PipelineOptions = PipelineOptions(),
             metrics: MetricsOptions = MetricsOptions()) -> RunRecord:
    """Run one task once; pipeline failures become Error records."""
    started = time.perf_counter()
    try:
        result = answer(task.query, registry, llm, options)
    except CrossRagError as exc:
        elapsed = time.perf_counter() - started
        log.warning("task %d rep %d failed: %s", task_index, repetition, exc)
        return RunRecord(
            model=llm.model_id, scenario=scenario_id, task=task_index,
            repetition=repetition,
            outcome=classify(exc, task.rubric).value,
            scores=None, latency_s=elapsed, stages=None, answer=None,
            error=f"{type(exc).__name__}: {exc}")
    scores = score_answer(result.text, task.reference,
                          max_n=metrics.bleu_max_n, synonyms=metrics.synonyms)
    outcome = classify(result.text, task.rubric)
    return RunRecord(
        model=llm.model_id, scenario=scenario_id, task=task_index,
        repetition=repetition, outcome=outcome.value,
        scores={"bleu": scores.bleu, "meteor": scores.meteor,
                "length_ratio": scores.length_ratio},
        latency_s=result.stage_timings.total_s,
        stages=result.stage_timings.to_dict(),
        answer=result.text, error=None)


def run_scenario(scenario: Scenario, registry: Registry, llm, *,
                 repetitions: int = 1,
                 options: PipelineOptions = PipelineOptions(),
                 metrics: MetricsOptions = MetricsOptions()) -> list[RunRecord]:
    """Run every task `repetitions` times (repetitions outer, tasks inner)."""
    if repetitions < 1:
        raise ScenarioError(f"repetitions must be >= 1, got {repetitions}")
    validate_scenario(scenario, registry)
    records = []
    for repetition in range(1, repetitions + 1):
        for index, task in enumerate(scenario.tasks):
            records.append(run_task(
                task, registry, llm, scenario_id=scenario.scenario_id,
                task_index=index, repetition=repetition, options=options,
                metrics=metrics))
    return records


def write_records(path: str | Path, records: list[RunRecord]) -> None:
    lines = [canonical_json_line(r.to_dict()) for r in records]
    Path(path).write_text("".join(lines), encoding="utf-8")


def append_records(path: str | Path, records: list[RunRecord]) -> None:
    lines = [canonical_json_line(r.to_dict()) for r in records]
    with open(path, "a", encoding="utf-8") as handle:
        handle.write("".join(lines))


def canonical_json_line(document: dict) -> str:
    return json.dumps(document, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")) + "\n"


def read_records(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RecordsError(f"cannot read records {path}: {exc}") from exc
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except ValueError as exc:
            raise RecordsError(
                f"{path} line {number}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise RecordsError(f"{path} line {number}: record must be an object")
        try:
            records.append(RunRecord.from_dict(raw))
        except RecordsError as exc:
            raise RecordsError(f"{path} line {number}: {exc}") from exc
    return records


# --- aggregation ----------------------------------------------------------------

def round_half_up(value: float, digits: int = 0) -> float:
    """Decimal round-half-up on the shortest repr of `value`."""
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def largest_remainder_percentages(counts: list[int]) -> list[int]:
    """Integer percentages summing to exactly 100.

    Each count gets floor(count * 100 / total); the leftover points go to
    the largest fractional remainders, earliest-first on ties.
    """
    total = sum(counts)
    if total <= 0:
        raise NoRecordsError("cannot build a distribution over zero records")
    quotas = [count * 100 / total for count in counts]
    floors = [int(q) for q in quotas]
    leftover = 100 - sum(floors)
    order = sorted(range(len(counts)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


@dataclass(frozen=True)
class AggregateRow:
    """Per-(model, scenario) summary over run records.

    Metric means skip Error records and are None when every record errored;
    latency averages over all records. Values are rounded to two decimals,
    half up. success_rate is the exact fraction of success outcomes and
    distribution maps every outcome category to an integer percentage.
    """

    model: str
    scenario: str
    count: int
    bleu: float | None
    meteor: float | None
    length_ratio: float | None
    latency_s: float
    success_rate: float
    distribution: dict[str, int] = field(hash=False)

    def to_dict(self) -> dict:
        return {"model": self.model, "scenario": self.scenario,
                "count": self.count, "bleu": self.bleu, "meteor": self.meteor,
                "length_ratio": self.length_ratio, "latency_s": self.latency_s,
                "success_rate": self.success_rate,
                "distribution": dict(self.distribution)}


def aggregate(records: list[RunRecord]) -> list[AggregateRow]:
    """Group records by (model, scenario) in first-appearance order."""
    if not records:
        raise NoRecordsError("no run records to aggregate")
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for record in records:
        groups.setdefault((record.model, record.scenario), []).append(record)

    rows = []
    for (model, scenario), group in groups.items():
        scored = [r for r in group if r.scores is not None]

        def mean_of(key: str) -> float | None:
            if not scored:
                return None
            return round_half_up(
                sum(r.scores[key] for r in scored) / len(scored), 2)

        latency = round_half_up(
            sum(r.latency_s for r in group) / len(group), 2)
        successes = sum(1 for r in group
                        if OutcomeCategory(r.outcome) in SUCCESS_OUTCOMES)
        counts = [sum(1 for r in group if r.outcome == category.value)
                  for category in OUTCOME_ORDER]
        percentages = largest_remainder_percentages(counts)
        rows.append(AggregateRow(
            model=model, scenario=scenario, count=len(group),
            bleu=mean_of("bleu"), meteor=mean_of("meteor"),
            length_ratio=mean_of("length_ratio"), latency_s=latency,
            success_rate=successes / len(group),
            distribution={category.value: pct for category, pct
                          in zip(OUTCOME_ORDER, percentages)}))
    return rows


# --- report rendering -----------------------------------------------------------

REPORT_FORMATS = ("md", "json", "csv")


def _fmt_mean(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def _fmt_percent(value: float | None) -> str:
    return "-" if value is None else f"{round_half_up(value):.0f}%"


def render_report_markdown(rows: list[AggregateRow]) -> str:
    """One section per scenario, one table row per model.

    Cell formats: time "6.12s", metric means "0.49", ratio "183%",
    success "97%". Scenarios and models keep first-appearance order.
    """
    if not rows:
        raise NoRecordsError("no aggregate rows to render")
    scenarios: dict[str, list[AggregateRow]] = {}
    for row in rows:
        scenarios.setdefault(row.scenario, []).append(row)
    parts = []
    for scenario, group in scenarios.items():
        parts.append(f"### Scenario {scenario}")
        parts.append("")
        parts.append("| Model | Time | BLEU | METEOR | Ratio | Success |")
        parts.append("| --- | --- | --- | --- | --- | --- |")
        for row in group:
            parts.append(
                f"| {row.model} | {row.latency_s:.2f}s"
                f" | {_fmt_mean(row.bleu)} | {_fmt_mean(row.meteor)}"
                f" | {_fmt_percent(row.length_ratio)}"
                f" | {_fmt_percent(row.success_rate * 100)} |")
        parts.append("")
    return "\n".join(parts)


def render_report_json(rows: list[AggregateRow]) -> str:
    if not rows:
        raise NoRecordsError("no aggregate rows to render")
    return canonical_json({"rows": [row.to_dict() for row in rows]}) + "\n"


def render_report_csv(rows: list[AggregateRow]) -> str:
    """Long-form outcome distribution: model,scenario,category,percent."""
    if not rows:
        raise NoRecordsError("no aggregate rows to render")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["model", "scenario", "category", "percent"])
    for row in rows:
        for category in OUTCOME_ORDER:
            writer.writerow([row.model, row.scenario, category.value,
                             row.distribution[category.value]])
    return buffer.getvalue()


def render_report(rows: list[AggregateRow], fmt: str = "md") -> str:
    if fmt == "md":
        return render_report_markdown(rows)
    if fmt == "json":
        return render_report_json(rows)
    if fmt == "csv":
        return render_report_csv(rows)
    raise ValueError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
