"""Closed-form uncertainty scoring against hand-derived fixtures."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structsynth.retrieval import ApiDoc, EvidenceSet, Hit
from structsynth.uncertainty import (
    CodeSignals,
    CoverageSignals,
    UncertaintyConfig,
    compute_code_signals,
    compute_coverage,
    compute_trajectory_signals,
    compute_uncertainty,
    jaccard,
    normalized_statement_set,
)
from structsynth.verifier import Issue, VerdictReport

TOL = 1e-9


def verdict(layer: int, *codes: str) -> VerdictReport:
    if layer == 0:
        return VerdictReport(passed=True, failure_layer=0, issues=())
    issues = tuple(Issue(code=c, layer=layer, message="x") for c in codes or ("X",))
    return VerdictReport(passed=False, failure_layer=layer, issues=issues)


def evidence_over(*api_paths: str) -> EvidenceSet:
    docs = tuple(
        ApiDoc(doc_id=f"doc{i}", api_path=p, text=p) for i, p in enumerate(api_paths)
    )
    hits = tuple(Hit(d.doc_id, 1.0) for d in docs)
    return EvidenceSet(query="q", hits=hits, docs=docs)


FOUR_CALLS = (
    "block = design.getBlock()\n"
    "nets = block.getNets()\n"
    "insts = block.getInsts()\n"
    'net = block.findNet("clk")\n'
)


def test_clean_single_candidate_scores_zero(schema):
    source = "block = design.getBlock()\n"
    report = compute_uncertainty([source], [verdict(0)], schema, evidence=None)
    assert report.combined == 0.0
    assert report.code_risk == 0.0
    assert report.trajectory_risk == 0.0
    assert report.coverage_risk == 0.0
    assert not report.filtered


def test_no_repairs_with_failure_keeps_full_convergence_risk(schema):
    ts = compute_trajectory_signals(["x = 1\n"], [verdict(2, "A")])
    assert ts.convergence == 1.0
    assert ts.stagnation == 0.0
    assert ts.ineffectiveness == 0.0


def test_full_repair_zeroes_convergence(schema):
    ts = compute_trajectory_signals(["x = 1\n", "y = 2\n"], [verdict(2), verdict(0)])
    assert abs(ts.convergence - 0.0) < TOL


def test_worsening_layer_clamps_convergence_to_one(schema):
    ts = compute_trajectory_signals(["x = 1\n", "y = 2\n"], [verdict(1), verdict(4)])
    assert ts.convergence == 1.0


def test_three_step_descent(schema):
    sources = ["a = 1\n", "b = 2\n", "c = 3\n"]
    verdicts = [verdict(4), verdict(3), verdict(0)]
    ts = compute_trajectory_signals(sources, verdicts)
    assert abs(ts.convergence - 0.0) < TOL
    assert abs(ts.ineffectiveness - 0.0) < TOL


def test_partial_descent_and_flat_step(schema):
    sources = ["a = 1\n", "b = 2\n", "c = 3\n"]
    verdicts = [verdict(4), verdict(4), verdict(2)]
    ts = compute_trajectory_signals(sources, verdicts)
    assert abs(ts.convergence - 0.5) < TOL
    assert abs(ts.ineffectiveness - 0.5) < TOL


def test_remap_reorders_layer_distances(schema):
    sources = ["a = 1\n", "b = 2\n"]
    verdicts = [verdict(1), verdict(3)]
    raw = compute_trajectory_signals(sources, verdicts)
    remapped = compute_trajectory_signals(
        sources, verdicts, UncertaintyConfig(remap_layers=True)
    )
    assert raw.convergence == 1.0
    assert abs(remapped.convergence - 0.5) < TOL


def test_stagnation_is_mean_consecutive_jaccard(schema):
    sources = ["a = 1\nb = 2\n", "a = 1\nb = 2\n", "a = 1\nc = 3\n"]
    verdicts = [verdict(2), verdict(2), verdict(2)]
    ts = compute_trajectory_signals(sources, verdicts)
    assert abs(ts.stagnation - (1.0 + 1.0 / 3.0) / 2.0) < TOL
    assert ts.convergence == 1.0
    assert ts.ineffectiveness == 1.0


def test_trajectory_requires_one_verdict_per_candidate(schema):
    with pytest.raises(ValueError):
        compute_trajectory_signals(["a = 1\n"], [])
    with pytest.raises(ValueError):
        compute_trajectory_signals(["a = 1\n", "b = 2\n"], [verdict(0)])


def test_code_penalty_single_bad_import(schema):
    src = "import foo\nblock = design.getBlock()\n"
    cs = compute_code_signals(src, schema)
    assert cs == CodeSignals(1, 0, 0.0, 0.85)


def test_code_penalty_import_plus_enum(schema):
    src = "import foo\nstatus = foo.Bogus.NOPE\nblock = design.getBlock()\n"
    cs = compute_code_signals(src, schema)
    assert cs.invalid_import_count == 1
    assert cs.unknown_enum_count == 1
    assert abs(cs.code_confidence - 0.70) < TOL


def test_code_penalty_unknown_method_ratio(schema):
    src = "import foo\nblock = design.getBlock()\nblock.getBogus()\n"
    cs = compute_code_signals(src, schema)
    assert cs.unknown_method_ratio == 0.5
    assert abs(cs.code_confidence - 0.55) < TOL


def test_code_confidence_clips_at_zero(schema):
    src = "import foo\nimport bar\nx = foo.A.B\ny = bar.C.D\ndesign.getBogus()\n"
    cs = compute_code_signals(src, schema)
    assert cs == CodeSignals(2, 2, 1.0, 0.0)


def test_unparseable_source_scores_worst(schema):
    cs = compute_code_signals("x = = 1\n", schema)
    assert cs == CodeSignals(0, 0, 1.0, 0.0)
    cov = compute_coverage("x = = 1\n", schema, None)
    assert cov == CoverageSignals(0, 0, 0.0)


def test_coverage_fraction(schema):
    ev = evidence_over("Design.getBlock", "Block.getNets")
    cov = compute_coverage(FOUR_CALLS, schema, ev)
    assert cov == CoverageSignals(2, 4, 0.5)


def test_coverage_without_eligible_calls_is_confident(schema):
    assert compute_coverage("x = 1\n", schema, evidence_over()) == CoverageSignals(
        0, 0, 1.0
    )


def test_coverage_without_evidence_is_confident(schema):
    src = "block = design.getBlock()\nnets = block.getNets()\n"
    assert compute_coverage(src, schema, None) == CoverageSignals(0, 2, 1.0)


def test_coverage_ignores_unknown_methods(schema):
    src = "block = design.getBlock()\nblock.getBogus()\n"
    ev = evidence_over("Design.getBlock")
    assert compute_coverage(src, schema, ev) == CoverageSignals(1, 1, 1.0)


def test_jaccard_edge_cases():
    assert jaccard(frozenset(), frozenset()) == 1.0
    assert jaccard(frozenset({"a"}), frozenset()) == 0.0
    assert jaccard(frozenset({"a", "b"}), frozenset({"b", "c"})) == 1.0 / 3.0


def test_normalized_statement_set_falls_back_to_lines():
    fp = normalized_statement_set("x = = 1\n  y ==\n")
    assert fp == frozenset({"x = = 1", "y =="})


def test_combined_weighted_sum(schema):
    source = "import foo\n" + FOUR_CALLS
    ev = evidence_over("Design.getBlock", "Block.getNets")
    report = compute_uncertainty([source], [verdict(3, "A")], schema, ev)
    assert abs(report.code_risk - 0.15) < TOL
    assert abs(report.trajectory_risk - 0.4) < TOL
    assert abs(report.coverage_risk - 0.5) < TOL
    assert abs(report.combined - 0.33) < TOL
    assert not report.filtered


def test_combined_crosses_threshold_when_uncovered(schema):
    source = "import foo\n" + FOUR_CALLS
    report = compute_uncertainty([source], [verdict(3, "A")], schema, evidence_over())
    assert abs(report.combined - 0.48) < TOL
    assert report.filtered


def test_at_threshold_is_delivered(schema):
    source = "block = design.getBlock()\nnets = block.getNets()\n"
    ev = evidence_over("Design.getBlock")
    at = compute_uncertainty(
        [source], [verdict(0)], schema, ev, config=UncertaintyConfig(threshold=0.15)
    )
    assert at.combined == 0.15
    assert not at.filtered
    below = compute_uncertainty(
        [source], [verdict(0)], schema, ev, config=UncertaintyConfig(threshold=0.1)
    )
    assert below.filtered


def test_config_rejects_bad_weights():
    with pytest.raises(ValueError):
        UncertaintyConfig(code_weight=0.5, trajectory_weight=0.5, coverage_weight=0.5)
    with pytest.raises(ValueError):
        UncertaintyConfig(convergence_weight=0.9)


@settings(max_examples=50, deadline=None)
@given(
    layers=st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=5),
    seeds=st.lists(st.integers(min_value=0, max_value=9), min_size=1, max_size=5),
)
def test_signals_stay_in_unit_interval(schema, layers, seeds):
    n = min(len(layers), len(seeds))
    layers, seeds = layers[:n], seeds[:n]
    sources = [f"x{s} = {s}\n" for s in seeds]
    verdicts = [verdict(layer) for layer in layers]
    report = compute_uncertainty(sources, verdicts, schema, None)
    for value in (
        report.code_risk,
        report.trajectory_risk,
        report.coverage_risk,
        report.combined,
        report.trajectory.convergence,
        report.trajectory.stagnation,
        report.trajectory.ineffectiveness,
    ):
        assert 0.0 <= value <= 1.0
