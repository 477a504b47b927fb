"""Semantic judges: the final layer's pluggable task-intent check."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .adapters import AdapterError, run_json_command
from .depgraph import DepGraph, NodeKind
from .qas.analysis import TypedScript
from .schema import ApiSchema


class JudgeFailure(Exception):
    """The judge could not produce a verdict at all."""


@dataclass(frozen=True)
class Finding:
    code: str
    message: str


@dataclass(frozen=True)
class JudgeVerdict:
    ok: bool
    findings: tuple[Finding, ...] = ()


@dataclass(frozen=True)
class JudgeContext:
    prompt: str
    source: str
    typed: TypedScript
    graph: DepGraph
    schema: ApiSchema


class RuleBasedJudge:
    """Checks the program's effects against the shape of the task.

    A graph with an action node describes a state-changing task: the program
    must perform at least one mutating call. Anything else is a query: the
    program must print at least once.
    """

    def judge(self, ctx: JudgeContext) -> JudgeVerdict:
        wants_action = any(n.kind is NodeKind.ACTION for n in ctx.graph.nodes)
        if wants_action:
            if not any(cs.mutates for cs in ctx.typed.call_sites):
                return JudgeVerdict(
                    ok=False,
                    findings=(
                        Finding(
                            "L4_INCOMPLETE",
                            "task requires a state change but the program mutates nothing",
                        ),
                    ),
                )
            return JudgeVerdict(ok=True)
        if not any(b.name == "print" for b in ctx.typed.builtin_calls):
            return JudgeVerdict(
                ok=False,
                findings=(
                    Finding("L4_NO_OUTPUT", "query task but the program prints nothing"),
                ),
            )
        return JudgeVerdict(ok=True)


@dataclass
class ScriptedJudge:
    """Replays canned verdicts, for exercising the pipeline around the judge."""

    verdicts: list[JudgeVerdict]
    _cursor: int = 0

    def judge(self, ctx: JudgeContext) -> JudgeVerdict:
        if not self.verdicts:
            raise JudgeFailure("no scripted verdicts")
        v = self.verdicts[min(self._cursor, len(self.verdicts) - 1)]
        self._cursor += 1
        return v


@dataclass
class CommandJudge:
    """Bridges to an external judge answering JSON verdicts on stdio."""

    argv: tuple[str, ...]
    timeout: float = 30.0

    def judge(self, ctx: JudgeContext) -> JudgeVerdict:
        payload = {
            "prompt": ctx.prompt,
            "source": ctx.source,
            "graph": ctx.graph.to_dict(),
        }
        try:
            out = run_json_command(self.argv, payload, timeout=self.timeout)
            doc = json.loads(out)
            findings = tuple(
                Finding(str(f["code"]), str(f.get("message", "")))
                for f in doc.get("findings", [])
            )
            ok = bool(doc["ok"])
        except (AdapterError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise JudgeFailure(f"judge unusable: {exc}") from exc
        if not ok and not findings:
            findings = (Finding("L4_JUDGE", "judge rejected the program"),)
        return JudgeVerdict(ok=ok, findings=findings)
