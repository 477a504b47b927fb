"""Closed-form uncertainty scoring over a finished synthesis attempt.

Three risk axes, each in [0, 1]: code-level hallucination signals from the
final program, trajectory-level signals from how the repair loop behaved,
and evidence coverage of the calls the program makes. A weighted sum gives
the combined uncertainty; anything above the threshold should be filtered
rather than delivered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .qas.analysis import infer_types, normalize_statements
from .qas.parser import SyntaxFailure, parse
from .retrieval import EvidenceSet
from .schema import ApiSchema, valid_enum_ref, valid_import
from .verifier import VerdictReport

# Layer distances used when remapping is on: passing is closest, syntax
# failure is farthest, and the middle layers order by how much of the
# pipeline they survived.
_REMAP = {0: 0, 4: 1, 3: 2, 2: 3, 1: 4}


def _clip01(x: float) -> float:
    return max(0.0, min(1.0, x))


@dataclass(frozen=True)
class UncertaintyConfig:
    code_weight: float = 0.4
    trajectory_weight: float = 0.3
    coverage_weight: float = 0.3
    import_penalty: float = 0.15
    enum_penalty: float = 0.15
    unknown_method_penalty: float = 0.6
    convergence_weight: float = 0.4
    stagnation_weight: float = 0.3
    ineffectiveness_weight: float = 0.3
    threshold: float = 0.35
    remap_layers: bool = False

    def __post_init__(self) -> None:
        axis = self.code_weight + self.trajectory_weight + self.coverage_weight
        traj = (
            self.convergence_weight
            + self.stagnation_weight
            + self.ineffectiveness_weight
        )
        if abs(axis - 1.0) > 1e-9:
            raise ValueError(f"axis weights must sum to 1, got {axis}")
        if abs(traj - 1.0) > 1e-9:
            raise ValueError(f"trajectory weights must sum to 1, got {traj}")


@dataclass(frozen=True)
class CodeSignals:
    invalid_import_count: int
    unknown_enum_count: int
    unknown_method_ratio: float
    code_confidence: float


@dataclass(frozen=True)
class TrajectorySignals:
    convergence: float
    stagnation: float
    ineffectiveness: float


@dataclass(frozen=True)
class CoverageSignals:
    covered_calls: int
    total_calls: int
    coverage_confidence: float


@dataclass(frozen=True)
class UncertaintyReport:
    code: CodeSignals
    trajectory: TrajectorySignals
    coverage: CoverageSignals
    code_risk: float
    trajectory_risk: float
    coverage_risk: float
    combined: float
    threshold: float
    filtered: bool


def normalized_statement_set(source: str) -> frozenset[str]:
    """Statement fingerprint of a candidate; line-based for unparseable ones."""
    parsed = parse(source)
    if isinstance(parsed, SyntaxFailure):
        return frozenset(line.strip() for line in source.splitlines() if line.strip())
    return normalize_statements(parsed)


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def compute_code_signals(
    source: str, schema: ApiSchema, config: UncertaintyConfig = UncertaintyConfig()
) -> CodeSignals:
    """Hallucination counters over the final program; unparseable scores zero."""
    parsed = parse(source)
    if isinstance(parsed, SyntaxFailure):
        return CodeSignals(0, 0, 1.0, 0.0)
    ts = infer_types(parsed, schema)
    bad_imports = sum(1 for name in ts.imports if not valid_import(schema, name))
    bad_enums = sum(1 for ref in ts.enum_refs if not valid_enum_ref(schema, ref.name))
    all_method_names = {
        m for decl in schema.types.values() for m in decl.methods
    }
    unknown = 0
    for cs in ts.call_sites:
        base = cs.receiver_type.base
        if schema.is_object_type(base):
            if schema.method(base, cs.method) is None:
                unknown += 1
        elif cs.method not in all_method_names:
            unknown += 1
    ratio = unknown / len(ts.call_sites) if ts.call_sites else 0.0
    confidence = _clip01(
        1.0
        - config.import_penalty * bad_imports
        - config.enum_penalty * bad_enums
        - config.unknown_method_penalty * ratio
    )
    return CodeSignals(bad_imports, bad_enums, ratio, confidence)


def compute_trajectory_signals(
    candidates: Sequence[str],
    verdicts: Sequence[VerdictReport],
    config: UncertaintyConfig = UncertaintyConfig(),
) -> TrajectorySignals:
    """Risk read off the repair loop: convergence, stagnation, ineffectiveness."""
    if len(candidates) != len(verdicts) or not verdicts:
        raise ValueError("need one verdict per candidate")
    repairs = len(verdicts) - 1
    first = verdicts[0].failure_layer
    last = verdicts[-1].failure_layer
    if repairs == 0 and first == 0:
        convergence = 0.0
    else:
        if config.remap_layers:
            d_first, d_last = _REMAP[first], _REMAP[last]
        else:
            d_first, d_last = first, last
        convergence = _clip01(1.0 - (d_first - d_last) / max(d_first, 1))
    if repairs == 0:
        stagnation = 0.0
    else:
        sets = [normalized_statement_set(c) for c in candidates]
        sims = [jaccard(sets[i], sets[i + 1]) for i in range(len(sets) - 1)]
        stagnation = sum(sims) / len(sims)
    if repairs == 0:
        ineffectiveness = 0.0
    else:
        flat = sum(
            1
            for t in range(1, len(verdicts))
            if verdicts[t].failure_layer >= verdicts[t - 1].failure_layer
        )
        ineffectiveness = flat / repairs
    return TrajectorySignals(convergence, stagnation, ineffectiveness)


def compute_coverage(
    source: str, schema: ApiSchema, evidence: EvidenceSet | None
) -> CoverageSignals:
    """Fraction of schema-resolved calls that retrieved documentation backs."""
    parsed = parse(source)
    if isinstance(parsed, SyntaxFailure):
        return CoverageSignals(0, 0, 0.0)
    ts = infer_types(parsed, schema)
    eligible = [
        cs
        for cs in ts.call_sites
        if schema.is_object_type(cs.receiver_type.base)
        and schema.method(cs.receiver_type.base, cs.method) is not None
    ]
    if not eligible:
        return CoverageSignals(0, 0, 1.0)
    if evidence is None:
        return CoverageSignals(0, len(eligible), 1.0)
    covered = sum(
        1 for cs in eligible if evidence.covers(cs.receiver_type.base, cs.method)
    )
    return CoverageSignals(covered, len(eligible), covered / len(eligible))


def compute_uncertainty(
    candidates: Sequence[str],
    verdicts: Sequence[VerdictReport],
    schema: ApiSchema,
    evidence: EvidenceSet | None = None,
    config: UncertaintyConfig = UncertaintyConfig(),
) -> UncertaintyReport:
    """Score a finished attempt; the final candidate is the delivered program."""
    final = candidates[-1]
    code = compute_code_signals(final, schema, config)
    trajectory = compute_trajectory_signals(candidates, verdicts, config)
    coverage = compute_coverage(final, schema, evidence)
    code_risk = 1.0 - code.code_confidence
    trajectory_risk = (
        config.convergence_weight * trajectory.convergence
        + config.stagnation_weight * trajectory.stagnation
        + config.ineffectiveness_weight * trajectory.ineffectiveness
    )
    coverage_risk = 1.0 - coverage.coverage_confidence
    combined = (
        config.code_weight * code_risk
        + config.trajectory_weight * trajectory_risk
        + config.coverage_weight * coverage_risk
    )
    return UncertaintyReport(
        code=code,
        trajectory=trajectory,
        coverage=coverage,
        code_risk=code_risk,
        trajectory_risk=trajectory_risk,
        coverage_risk=coverage_risk,
        combined=combined,
        threshold=config.threshold,
        filtered=combined > config.threshold,
    )
