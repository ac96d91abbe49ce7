"""Matplotlib figures for the evaluation reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .data import Manifest
from .evaluate import ComprehensibilityReport, CoverageReport, rounded_percent


def comprehensibility_figure(report: ComprehensibilityReport, manifest: Manifest, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    counts = sorted(report.histogram)
    ax.bar(counts, [report.histogram[c] for c in counts], color="#444444", width=0.8)
    ax.set_xlabel("substituted atoms per explanation")
    ax.set_ylabel("samples")
    title = f"Explanation size, target = {manifest.class_names[report.target]}"
    if report.mean is not None:
        title += f" (mean {report.mean:.2f}, mode {report.mode})"
    ax.set_title(title)
    ax.set_xticks(counts)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def coverage_figure(report: CoverageReport, manifest: Manifest, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    names, pcts = [], []
    for g in report.groups:
        names.append(
            f"{manifest.class_names[g.true_label]},\n{manifest.class_names[g.predicted_label]}"
        )
        pcts.append(0 if g.coverage is None else rounded_percent(g.coverage))
    ax.bar(range(len(names)), pcts, color="#b22222", width=0.6)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("coverage (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Coverage per misclassification type")
    for i, pct in enumerate(pcts):
        ax.text(i, pct + 2, str(pct), ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
