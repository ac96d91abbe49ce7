"""Quantitative evaluation harnesses: comprehensibility and coverage.

Comprehensibility: explain each eval sample toward one target class and
aggregate substitution-set sizes (mean, mode, histogram). Coverage: group the
misclassified eval samples by (true, predicted), explain one seed per group,
re-apply the seed's exact substitutions to every member, and report the hit
ratio as an exact rational.

Both harnesses refuse eval ids that overlap the distractor store's training
ids, so replacement values can never leak from the evaluation set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .classifier import ClassifierHandle, decide_label
from .data import Dataset, Manifest
from .distractors import DistractorError, DistractorStore
from .search import (
    Explanation,
    SearchConfig,
    SearchError,
    apply_substitution,
    explain,
    explanation_to_dict,
)


class EvalError(Exception):
    """Evaluation harness misuse (leakage, bad eval ids, precondition)."""


@dataclass(frozen=True)
class ComprehensibilityReport:
    target: int
    per_sample: dict[str, int]
    mean: float | None
    mode: int | None
    histogram: dict[int, int]
    failures: list[str]


@dataclass(frozen=True)
class CoverageGroup:
    true_label: int
    predicted_label: int
    size: int
    seed_sample_id: str
    hits: int | None
    coverage: Fraction | None
    explanation: Explanation | None
    reason: str | None = None


@dataclass(frozen=True)
class CoverageReport:
    groups: list[CoverageGroup]


def _guard_leakage(store: DistractorStore, eval_ids) -> None:
    if len(set(eval_ids)) != len(list(eval_ids)):
        raise EvalError("duplicate ids in eval_ids")
    overlap = sorted(set(eval_ids) & set(store.dataset.samples))
    if overlap:
        raise EvalError(
            f"eval ids overlap the store's training ids (e.g. {overlap[0]}); "
            "evaluation data must be disjoint to avoid leakage"
        )


def _predict_all(clf: ClassifierHandle, dataset: Dataset, ids) -> dict[str, int]:
    batch = np.stack([dataset.samples[sid].values for sid in ids])
    scores = clf.score_matrix(batch)
    return {sid: decide_label(clf.rule, row) for sid, row in zip(ids, scores)}


def summarize_counts(counts: list[int]) -> tuple[float | None, int | None, dict[int, int]]:
    """Mean, mode (most frequent, ties to the smallest), and histogram."""
    if not counts:
        return None, None, {}
    histogram: dict[int, int] = {}
    for c in counts:
        histogram[c] = histogram.get(c, 0) + 1
    mode = min(histogram, key=lambda c: (-histogram[c], c))
    mean = sum(counts) / len(counts)
    return mean, mode, dict(sorted(histogram.items()))


def eval_comprehensibility(
    clf: ClassifierHandle,
    store: DistractorStore,
    dataset: Dataset,
    eval_ids: list[str],
    target: int,
    cfg: SearchConfig = SearchConfig(),
) -> ComprehensibilityReport:
    """Substitution-count statistics over per-sample explanations.

    Per-sample search failures go to ``failures`` and are excluded from the
    statistics; they never abort the run.
    """
    _guard_leakage(store, eval_ids)
    for sid in eval_ids:
        if sid not in dataset.samples:
            raise EvalError(f"unknown eval sample {sid}")
    predictions = _predict_all(clf, dataset, eval_ids) if eval_ids else {}
    for sid in eval_ids:
        if predictions[sid] == target:
            raise EvalError(
                f"eval sample {sid} is already predicted as the target class"
            )
    per_sample: dict[str, int] = {}
    failures: list[str] = []
    for sid in eval_ids:
        try:
            expl = explain(clf, store, dataset, sid, target, cfg)
        except (SearchError, DistractorError):
            failures.append(sid)
            continue
        per_sample[sid] = len(expl.substitutions)
    mean, mode, histogram = summarize_counts(list(per_sample.values()))
    return ComprehensibilityReport(target, per_sample, mean, mode, histogram, failures)


def eval_coverage(
    clf: ClassifierHandle,
    store: DistractorStore,
    dataset: Dataset,
    eval_ids: list[str],
    cfg: SearchConfig = SearchConfig(),
    min_group_size: int = 1,
) -> CoverageReport:
    """Coverage per misclassification type.

    Groups the misclassified eval samples by (true, predicted), explains the
    first sample of each group toward its true label, applies that seed's
    exact (distractor values, substitution set) to every member including the
    seed, and counts a hit whenever the new prediction equals the true label.
    """
    _guard_leakage(store, eval_ids)
    for sid in eval_ids:
        if sid not in dataset.samples:
            raise EvalError(f"unknown eval sample {sid}")
    predictions = _predict_all(clf, dataset, eval_ids) if eval_ids else {}

    groups: dict[tuple[int, int], list[str]] = {}
    for sid in eval_ids:
        true, pred = dataset.labels[sid], predictions[sid]
        if true != pred:
            groups.setdefault((true, pred), []).append(sid)

    report_groups = []
    for (true, pred), members in sorted(groups.items()):
        if len(members) < min_group_size:
            continue
        seed = members[0]
        try:
            expl = explain(clf, store, dataset, seed, true, cfg)
        except (SearchError, DistractorError) as exc:
            report_groups.append(
                CoverageGroup(true, pred, len(members), seed, None, None, None, str(exc))
            )
            continue
        distractor = store.dataset.samples[expl.distractor_id]
        modified = np.stack(
            [
                apply_substitution(dataset.samples[sid], distractor, expl.substitutions).values
                for sid in members
            ]
        )
        scores = clf.score_matrix(modified)
        hits = sum(1 for row in scores if decide_label(clf.rule, row) == true)
        report_groups.append(
            CoverageGroup(true, pred, len(members), seed, hits,
                          Fraction(hits, len(members)), expl)
        )
    return CoverageReport(report_groups)


def rounded_percent(coverage: Fraction) -> int:
    """Exact half-up integer percentage (so 28/49 prints as 57)."""
    return (200 * coverage.numerator + coverage.denominator) // (2 * coverage.denominator)


def comprehensibility_to_dict(report: ComprehensibilityReport, manifest: Manifest) -> dict:
    return {
        "target": manifest.class_names[report.target],
        "per_sample": dict(sorted(report.per_sample.items())),
        "mean": report.mean,
        "mode": report.mode,
        "histogram": {str(k): v for k, v in report.histogram.items()},
        "failures": sorted(report.failures),
    }


def coverage_to_dict(report: CoverageReport, manifest: Manifest) -> dict:
    groups = []
    for g in report.groups:
        entry = {
            "true_label": manifest.class_names[g.true_label],
            "predicted_label": manifest.class_names[g.predicted_label],
            "N": g.size,
            "hits": g.hits,
            "coverage": None
            if g.coverage is None
            else {
                "hits": g.hits,
                "n": g.size,
                "value": float(g.coverage),
                "percent": rounded_percent(g.coverage),
            },
            "seed_sample_id": g.seed_sample_id,
            "explanation": None if g.explanation is None else explanation_to_dict(g.explanation, manifest),
        }
        if g.reason is not None:
            entry["reason"] = g.reason
        groups.append(entry)
    return {"groups": groups}


def coverage_table(report: CoverageReport, manifest: Manifest) -> str:
    """Aligned plain-text table: misclassification type, coverage %, N."""
    header = ("Misclassification Type (True, Predicted)", "Coverage (%)", "N")
    rows = []
    for g in report.groups:
        kind = f"{manifest.class_names[g.true_label]}, {manifest.class_names[g.predicted_label]}"
        pct = "n/a" if g.coverage is None else str(rounded_percent(g.coverage))
        rows.append((kind, pct, str(g.size)))
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(3)
    ]
    lines = [
        f"{header[0]:<{widths[0]}}  {header[1]:>{widths[1]}}  {header[2]:>{widths[2]}}"
    ]
    for r in rows:
        lines.append(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}")
    return "\n".join(lines) + "\n"


def comprehensibility_table(report: ComprehensibilityReport, manifest: Manifest) -> str:
    lines = [
        f"target class: {manifest.class_names[report.target]}",
        f"explained samples: {len(report.per_sample)}",
        f"failures: {len(report.failures)}",
        f"mean substitutions: {'n/a' if report.mean is None else format(report.mean, '.3f')}",
        f"mode substitutions: {'n/a' if report.mode is None else report.mode}",
        "histogram:",
    ]
    for count, freq in report.histogram.items():
        lines.append(f"  {count:>3}  {freq}")
    return "\n".join(lines) + "\n"
