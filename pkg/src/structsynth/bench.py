"""Benchmark harness: task suites, per-task records, and quality aggregates.

A run synthesizes every task, executes accepted programs in fresh sessions,
and reports pass rate, tool calls per task, verifier quality against ground
execution, uncertainty-filter sweeps, and graph accuracy by prompt length.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .controller import SynthesisConfig, synthesize
from .depgraph import (
    DepGraph,
    ExtractorFailure,
    GraphExtractor,
    GraphMetrics,
    graph_metrics,
)
from .generators import (
    DefectKind,
    GenerationRequest,
    GeneratorFailure,
    TemplateGenerator,
    apply_defect,
)
from .judges import RuleBasedJudge
from .orchestrator import run_with_reflection
from .qas.parser import SyntaxFailure, parse
from .retrieval import Retriever
from .runtime import ExecStatus, Session, Snapshot
from .schema import ApiSchema, ParseError
from .verifier import verify_all

BUCKETS = ("<8", "<15", "<25", ">=25")


def bucket_of(prompt: str) -> str:
    words = len(prompt.split())
    if words < 8:
        return "<8"
    if words < 15:
        return "<15"
    if words < 25:
        return "<25"
    return ">=25"


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    prompt: str
    kind: str  # query | action
    truth_graph: DepGraph | None = None


@dataclass(frozen=True)
class MultiTaskSpec:
    task_id: str
    steps: tuple[str, ...]


def load_suite(path: str | Path) -> list[TaskSpec]:
    raw = _read_tasks(path)
    tasks = []
    for item in raw:
        truth = item.get("truth_graph")
        tasks.append(
            TaskSpec(
                task_id=str(item["id"]),
                prompt=str(item["prompt"]),
                kind=str(item.get("kind", "query")),
                truth_graph=DepGraph.from_dict(truth) if truth else None,
            )
        )
    return tasks


def load_multi_suite(path: str | Path) -> list[MultiTaskSpec]:
    raw = _read_tasks(path)
    return [
        MultiTaskSpec(task_id=str(item["id"]), steps=tuple(str(s) for s in item["steps"]))
        for item in raw
    ]


def _read_tasks(path: str | Path) -> list[dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read suite {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("tasks"), list):
        raise ParseError("suite document needs a 'tasks' list")
    return doc["tasks"]


@dataclass
class TaskRecord:
    task_id: str
    kind: str
    bucket: str
    accepted: bool
    verifier_pass: bool
    final_layer: int
    layers_run: tuple[int, ...]
    tool_calls: int
    exec_status: str | None
    exec_forced: bool
    uncertainty: float
    filtered: bool
    graph: GraphMetrics | None
    repairs: int
    error: str | None = None


@dataclass
class MultiRecord:
    task_id: str
    steps: int
    passed: bool
    reflected: bool
    tool_calls: int


@dataclass(frozen=True)
class VerifierQuality:
    precision: float | None
    recall: float | None
    false_pass_rate: float | None
    passes: int
    exec_ok: int
    agree: int


def verifier_quality(records: Sequence[TaskRecord]) -> VerifierQuality:
    """Verifier-vs-execution agreement over records that were executed."""
    ran = [r for r in records if r.exec_status is not None]
    passes = [r for r in ran if r.verifier_pass]
    oks = [r for r in ran if r.exec_status == "ok"]
    agree = sum(1 for r in passes if r.exec_status == "ok")
    precision = agree / len(passes) if passes else None
    recall = agree / len(oks) if oks else None
    fpr = None if precision is None else 1.0 - precision
    return VerifierQuality(precision, recall, fpr, len(passes), len(oks), agree)


@dataclass(frozen=True)
class FilterStats:
    theta: float
    delivered: int
    filtered_out: int
    precision: float | None
    false_pass_rate: float | None


@dataclass(frozen=True)
class Labeled:
    uncertainty: float
    verifier_pass: bool
    exec_ok: bool


def filter_metrics(labeled: Sequence[Labeled], theta: float) -> FilterStats:
    """Quality of the verifier-pass set after dropping uncertain programs."""
    passed = [r for r in labeled if r.verifier_pass]
    delivered = [r for r in passed if r.uncertainty <= theta]
    filtered_out = len(passed) - len(delivered)
    good = sum(1 for r in delivered if r.exec_ok)
    precision = good / len(delivered) if delivered else None
    fpr = None if precision is None else 1.0 - precision
    return FilterStats(theta, len(delivered), filtered_out, precision, fpr)


def theta_sweep(labeled: Sequence[Labeled], thetas: Sequence[float]) -> list[FilterStats]:
    return [filter_metrics(labeled, t) for t in thetas]


@dataclass
class BucketStats:
    tasks: int = 0
    node_f1: float = 0.0
    edge_f1: float = 0.0
    exact: float = 0.0


def graph_accuracy(records: Sequence[TaskRecord]) -> dict[str, BucketStats]:
    out: dict[str, BucketStats] = {}
    for bucket in BUCKETS:
        scored = [r for r in records if r.bucket == bucket and r.graph is not None]
        stats = BucketStats(tasks=len(scored))
        if scored:
            stats.node_f1 = sum(r.graph.node_f1 for r in scored) / len(scored)
            stats.edge_f1 = sum(r.graph.edge_f1 for r in scored) / len(scored)
            stats.exact = sum(1 for r in scored if r.graph.exact_match) / len(scored)
        out[bucket] = stats
    return out


@dataclass
class BenchReport:
    records: list[TaskRecord] = field(default_factory=list)
    multi_records: list[MultiRecord] = field(default_factory=list)

    @property
    def pass_rate(self) -> float:
        done = [r for r in self.records if r.exec_status is not None and not r.exec_forced]
        if not self.records:
            return 0.0
        good = sum(1 for r in done if r.accepted and r.exec_status == "ok")
        return good / len(self.records)

    @property
    def calls_per_task(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.tool_calls for r in self.records) / len(self.records)

    def quality(self) -> VerifierQuality:
        return verifier_quality(self.records)

    def labeled(self) -> list[Labeled]:
        return [
            Labeled(r.uncertainty, r.verifier_pass, r.exec_status == "ok")
            for r in self.records
            if r.exec_status is not None
        ]

    def buckets(self) -> dict[str, BucketStats]:
        return graph_accuracy(self.records)


def run_task(
    task: TaskSpec,
    schema: ApiSchema,
    retriever: Retriever,
    extractor: GraphExtractor,
    generator,
    judge,
    session_factory: Callable[[], Session],
    config: SynthesisConfig = SynthesisConfig(),
    force_exec: bool = False,
) -> TaskRecord:
    """Synthesize one task and execute its program in a fresh session."""
    bucket = bucket_of(task.prompt)
    session = session_factory()
    try:
        result = synthesize(
            task.prompt, schema, retriever, extractor, generator, judge, config
        )
    except (GeneratorFailure, ExtractorFailure) as exc:
        return TaskRecord(
            task_id=task.task_id,
            kind=task.kind,
            bucket=bucket,
            accepted=False,
            verifier_pass=False,
            final_layer=-1,
            layers_run=(),
            tool_calls=session.tool_calls,
            exec_status=None,
            exec_forced=False,
            uncertainty=1.0,
            filtered=True,
            graph=None,
            repairs=0,
            error=str(exc),
        )
    exec_status: str | None = None
    forced = False
    if result.accepted or force_exec:
        forced = not result.accepted
        execution = session.execute(result.source)
        exec_status = execution.status.value
    metrics = (
        graph_metrics(result.graph, task.truth_graph)
        if task.truth_graph is not None
        else None
    )
    return TaskRecord(
        task_id=task.task_id,
        kind=task.kind,
        bucket=bucket,
        accepted=result.accepted,
        verifier_pass=result.verdict.passed,
        final_layer=result.verdict.failure_layer,
        layers_run=result.verdict.layers_run,
        tool_calls=session.tool_calls,
        exec_status=exec_status,
        exec_forced=forced,
        uncertainty=result.uncertainty.combined,
        filtered=result.uncertainty.filtered,
        graph=metrics,
        repairs=len(result.trajectory.actions),
    )


def run_bench(
    tasks: Sequence[TaskSpec],
    schema: ApiSchema,
    retriever: Retriever,
    extractor_factory: Callable[[], GraphExtractor],
    generator_factory: Callable[[], object],
    judge_factory: Callable[[], object],
    session_factory: Callable[[], Session],
    config: SynthesisConfig = SynthesisConfig(),
    force_exec: bool = False,
    workers: int = 1,
    multis: Sequence[MultiTaskSpec] = (),
) -> BenchReport:
    """Run a full suite; factories keep stateful components task-local."""
    report = BenchReport()

    def one(task: TaskSpec) -> TaskRecord:
        return run_task(
            task,
            schema,
            retriever,
            extractor_factory(),
            generator_factory(),
            judge_factory(),
            session_factory,
            config,
            force_exec,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report.records = list(pool.map(one, tasks))
    else:
        report.records = [one(t) for t in tasks]

    for m in multis:
        outcome = run_with_reflection(
            m.task_id,
            m.steps,
            schema,
            retriever,
            extractor_factory(),
            generator_factory(),
            judge_factory(),
            session_factory,
            reflector=None,
            config=config,
        )
        report.multi_records.append(
            MultiRecord(
                task_id=m.task_id,
                steps=len(m.steps),
                passed=outcome.passed,
                reflected=outcome.second is not None,
                tool_calls=outcome.total_tool_calls,
            )
        )
    return report


@dataclass(frozen=True)
class PlantedCase:
    """A program with a known defect (or none), plus its graph and prompt."""

    task: TaskSpec
    defect: DefectKind | None
    source: str
    graph: DepGraph


def plant_cases(
    plan: Sequence[tuple[TaskSpec, DefectKind | None]],
    schema: ApiSchema,
    extractor: GraphExtractor,
) -> list[PlantedCase]:
    """Render each task cleanly, then break it per the plan."""
    template = TemplateGenerator(schema)
    cases = []
    for task, defect in plan:
        graph = extractor.extract(task.prompt, None, ())
        source = template.generate(GenerationRequest(prompt=task.prompt, graph=graph))
        if defect is not None:
            source = apply_defect(source, defect, schema)
        cases.append(PlantedCase(task, defect, source, graph))
    return cases


@dataclass(frozen=True)
class AblationPoint:
    max_layer: int
    passes: int
    exec_ok_among_passes: int
    precision: float | None


def ablation_precisions(
    cases: Sequence[PlantedCase],
    schema: ApiSchema,
    snapshot: Snapshot,
    layers: Sequence[int] = (1, 3, 4),
    step_budget: int = 5000,
) -> dict[int, AblationPoint]:
    """Verifier precision at several pipeline depths over planted programs.

    Every case executes once in its own session to establish ground truth;
    unparseable programs count as runtime errors.
    """
    judge = RuleBasedJudge()
    truths: list[bool] = []
    for case in cases:
        session = Session(snapshot, schema, step_budget=step_budget)
        if isinstance(parse(case.source), SyntaxFailure):
            truths.append(False)
            continue
        execution = session.execute(case.source)
        truths.append(execution.status is ExecStatus.OK)
    out: dict[int, AblationPoint] = {}
    for max_layer in layers:
        passes = 0
        good = 0
        for case, ok in zip(cases, truths):
            verdict = verify_all(
                case.source,
                case.graph,
                schema,
                None,
                judge,
                case.task.prompt,
                max_layer=max_layer,
            )
            if verdict.passed:
                passes += 1
                if ok:
                    good += 1
        out[max_layer] = AblationPoint(
            max_layer, passes, good, good / passes if passes else None
        )
    return out
