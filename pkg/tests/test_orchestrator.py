"""Multi-step episodes: ordering, skip-on-failure, reflection retries."""

from __future__ import annotations

from structsynth.controller import SynthesisConfig
from structsynth.extractors import PatternTableExtractor
from structsynth.generators import (
    DefectKind,
    FaultInjectionGenerator,
    HintSensitiveGenerator,
    ScriptedGenerator,
    TemplateGenerator,
)
from structsynth.judges import RuleBasedJudge
from structsynth.orchestrator import (
    RuleBasedReflector,
    ScriptedReflector,
    StepHint,
    run_episode,
    run_with_reflection,
)
from structsynth.runtime import Session

LIST_NETS = (
    "block = design.getBlock()\n"
    "for net in block.getNets():\n"
    "    print(net.getName())\n"
)


def episode(prompts, schema, retriever, session, generator=None, config=None, **kw):
    return run_episode(
        "ep",
        prompts,
        schema,
        retriever,
        PatternTableExtractor(schema),
        generator or TemplateGenerator(schema),
        RuleBasedJudge(),
        session,
        config or SynthesisConfig(),
        **kw,
    )


def test_steps_share_one_session(schema, retriever, snapshot):
    session = Session(snapshot, schema)
    result = episode(
        ["Set the weight of net clk to 9", "Print the weight of net clk"],
        schema,
        retriever,
        session,
    )
    assert result.passed
    assert [s.status for s in result.steps] == ["ok", "ok"]
    assert result.steps[1].execution.output == ("9",)
    assert result.tool_calls == 2
    assert result.first_failure() is None


def test_first_failure_skips_remaining_steps(schema, retriever, snapshot):
    generator = ScriptedGenerator(sources=[LIST_NETS, "print(ghost)\n"])
    result = episode(
        [
            "List all nets in the block",
            "Print the weight of net clk",
            "List all nets in the block",
        ],
        schema,
        retriever,
        Session(snapshot, schema),
        generator=generator,
        config=SynthesisConfig(budget=0),
    )
    assert [s.status for s in result.steps] == ["ok", "rejected", "skipped"]
    assert result.first_failure() == 1
    assert not result.passed
    assert result.tool_calls == 1
    assert "layer 2" in result.steps[1].detail


def test_runtime_failure_marks_step_exec_failed(schema, retriever, snapshot):
    session = Session(snapshot, schema, crash_probability=1.0, seed=1)
    result = episode(
        ["Set the weight of net clk to 3"], schema, retriever, session
    )
    assert [s.status for s in result.steps] == ["exec_failed"]
    assert result.steps[0].detail == "Crash"
    assert result.first_failure() == 0


def test_generator_collapse_marks_step_error(schema, retriever, snapshot):
    generator = ScriptedGenerator(sources=[""])
    result = episode(
        ["Set the weight of net clk to 3", "Print the weight of net clk"],
        schema,
        retriever,
        Session(snapshot, schema),
        generator=generator,
    )
    assert [s.status for s in result.steps] == ["error", "skipped"]
    assert "empty" in result.steps[0].detail


def test_empty_episode_never_passes(schema, retriever, snapshot):
    result = episode([], schema, retriever, Session(snapshot, schema))
    assert not result.passed
    assert result.steps == []


def test_scripted_reflection_retries_once(schema, retriever, snapshot):
    generator = HintSensitiveGenerator(
        TemplateGenerator(schema), "decompose", DefectKind.USE_BEFORE_DEF, schema
    )
    outcome = run_with_reflection(
        "m1",
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        PatternTableExtractor(schema),
        generator,
        RuleBasedJudge(),
        lambda: Session(snapshot, schema),
        reflector=ScriptedReflector(hints=(StepHint(0, "decompose the task"),)),
    )
    assert not outcome.first.passed
    assert outcome.second is not None
    assert outcome.second.passed
    assert outcome.passed
    assert outcome.final is outcome.second
    assert outcome.total_tool_calls == outcome.first.tool_calls + outcome.second.tool_calls


def test_no_reflection_when_first_pass_succeeds(schema, retriever, snapshot):
    outcome = run_with_reflection(
        "m2",
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        PatternTableExtractor(schema),
        TemplateGenerator(schema),
        RuleBasedJudge(),
        lambda: Session(snapshot, schema),
        reflector=ScriptedReflector(hints=(StepHint(0, "never used"),)),
    )
    assert outcome.first.passed
    assert outcome.second is None
    assert outcome.hints == ()


def test_no_retry_without_hints(schema, retriever, snapshot):
    generator = FaultInjectionGenerator(
        TemplateGenerator(schema), DefectKind.UNKNOWN_METHOD, schema, heal_after=99
    )
    outcome = run_with_reflection(
        "m3",
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        PatternTableExtractor(schema),
        generator,
        RuleBasedJudge(),
        lambda: Session(snapshot, schema),
        reflector=ScriptedReflector(hints=()),
        config=SynthesisConfig(budget=1),
    )
    assert not outcome.passed
    assert outcome.second is None


def test_hints_for_same_step_merge(schema, retriever, snapshot):
    generator = HintSensitiveGenerator(
        TemplateGenerator(schema), "beta", DefectKind.USE_BEFORE_DEF, schema
    )
    outcome = run_with_reflection(
        "m4",
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        PatternTableExtractor(schema),
        generator,
        RuleBasedJudge(),
        lambda: Session(snapshot, schema),
        reflector=ScriptedReflector(
            hints=(StepHint(0, "alpha"), StepHint(0, "beta"))
        ),
        config=SynthesisConfig(budget=1),
    )
    assert outcome.second is not None
    assert outcome.second.passed


def test_rule_based_reflector_surfaces_verifier_errors(schema, retriever, snapshot):
    generator = FaultInjectionGenerator(
        TemplateGenerator(schema), DefectKind.USE_BEFORE_DEF, schema, heal_after=99
    )
    failed = episode(
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        Session(snapshot, schema),
        generator=generator,
        config=SynthesisConfig(budget=1),
    )
    hints = RuleBasedReflector().reflect(failed)
    assert hints
    assert all(h.step_index == 0 for h in hints)
    assert any(h.hint.startswith("L2_USE_BEFORE_DEF") for h in hints)


def test_rule_based_reflector_reports_runtime_failure(schema, retriever, snapshot):
    session = Session(snapshot, schema, crash_probability=1.0, seed=1)
    failed = episode(
        ["Set the weight of net clk to 3"], schema, retriever, session
    )
    hints = RuleBasedReflector().reflect(failed)
    assert any(h.hint.startswith("runtime failure Crash") for h in hints)


def test_rule_based_reflector_blames_earlier_step(schema, retriever, snapshot):
    generator = ScriptedGenerator(
        sources=[LIST_NETS, "block = design.getBlock()\nprint(block)\n"]
    )
    failed = episode(
        ["List all nets in the block", "Print the weight of net clk"],
        schema,
        retriever,
        Session(snapshot, schema),
        generator=generator,
        config=SynthesisConfig(budget=0),
    )
    assert failed.first_failure() == 1
    hints = RuleBasedReflector().reflect(failed)
    assert any(h.step_index == 1 and "L2_EDGE_UNREALIZED" in h.hint for h in hints)
    assert any(h.step_index == 0 and "needs a Block" in h.hint for h in hints)


def test_rule_based_reflector_quiet_on_success(schema, retriever, snapshot):
    passed = episode(
        ["Set the weight of net clk to 3"],
        schema,
        retriever,
        Session(snapshot, schema),
    )
    assert RuleBasedReflector().reflect(passed) == ()


def test_rule_based_reflector_handles_error_steps(schema, retriever, snapshot):
    failed = episode(
        ["List all nets in the block"],
        schema,
        retriever,
        Session(snapshot, schema),
        generator=ScriptedGenerator(sources=[""]),
    )
    hints = RuleBasedReflector().reflect(failed)
    assert len(hints) == 1
    assert hints[0].step_index == 0
