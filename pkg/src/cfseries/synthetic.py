"""Synthetic benchmarks with planted decision rules.

Two generators back the quantitative test suites:

* ``planted_benchmark`` — a binary task whose classifier is a conjunction of
  interval rules over a known variable set P. Normal samples pass every rule
  with a wide margin; abnormal samples violate a chosen subset of P. The
  minimal substitution set that flips an abnormal sample to normal is exactly
  its violation set, so recovery can be checked against ground truth.

* ``coverage_benchmark`` — one misclassification group of configurable size
  in which a prescribed number of members share the seed's defect, giving an
  exactly known coverage ratio.

Both are deterministic for a fixed seed. Noise amplitudes are chosen so that
per-variable means stay far from the rule thresholds (the margin is 1.0 and
the worst-case mean noise is a few hundredths), which is what makes the
ground truth exact rather than probabilistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Manifest, MultivariateSeries

CLASS_NAMES = ("abnormal", "normal")
ABNORMAL, NORMAL = 0, 1


@dataclass(frozen=True)
class Benchmark:
    train: Dataset
    eval: Dataset
    model_spec: dict
    truth: dict


def _series(manifest: Manifest, values: np.ndarray) -> MultivariateSeries:
    return MultivariateSeries(manifest.variable_names, values)


def _rule_spec(planted: list[int], timesteps: int, gain: float) -> dict:
    return {
        "kind": "interval_rule",
        "rules": [
            {"variable": int(v), "window": [0, timesteps], "threshold": 0.0, "gain": gain}
            for v in planted
        ],
        "positive_class": NORMAL,
    }


def _sample_values(rng, n_vars, n_t, rule_means: dict[int, float]) -> np.ndarray:
    values = rng.normal(0.0, 1.0, size=(n_vars, n_t))
    for var, mean in rule_means.items():
        values[var] = rng.normal(mean, 0.25, size=n_t)
    return values


def planted_benchmark(
    planted_size: int,
    variables: int = 6,
    timesteps: int = 16,
    train_normals: int = 40,
    train_abnormals: int = 20,
    eval_samples: int = 40,
    seed: int = 0,
    gain: float = 4.0,
) -> Benchmark:
    """Benchmark whose classifier depends on a known planted variable set."""
    if not 1 <= planted_size <= variables:
        raise ValueError(f"planted_size {planted_size} out of range for V={variables}")
    rng = np.random.default_rng(seed)
    manifest = Manifest(
        CLASS_NAMES, tuple(f"var{i}" for i in range(variables)), timesteps
    )
    planted = sorted(int(v) for v in rng.choice(variables, size=planted_size, replace=False))

    def normal_values():
        return _sample_values(rng, variables, timesteps, {v: 1.0 for v in planted})

    def abnormal_values(violated):
        means = {v: (-1.0 if v in violated else 1.0) for v in planted}
        return _sample_values(rng, variables, timesteps, means)

    def violation_subset():
        size = int(rng.integers(1, planted_size + 1))
        return sorted(int(v) for v in rng.choice(planted, size=size, replace=False))

    train_samples, train_labels = {}, {}
    for i in range(train_normals):
        sid = f"t{i:03d}"
        train_samples[sid] = _series(manifest, normal_values())
        train_labels[sid] = NORMAL
    for i in range(train_abnormals):
        sid = f"t{train_normals + i:03d}"
        train_samples[sid] = _series(manifest, abnormal_values(violation_subset()))
        train_labels[sid] = ABNORMAL

    eval_samples_map, eval_labels, violations = {}, {}, {}
    for i in range(eval_samples):
        sid = f"e{i:03d}"
        violated = violation_subset()
        eval_samples_map[sid] = _series(manifest, abnormal_values(violated))
        eval_labels[sid] = ABNORMAL
        violations[sid] = violated

    truth = {
        "planted_variables": [manifest.variable_names[v] for v in planted],
        "planted_indices": planted,
        "eval_violations": {
            sid: [manifest.variable_names[v] for v in vs] for sid, vs in violations.items()
        },
        "target_class": CLASS_NAMES[NORMAL],
    }
    return Benchmark(
        Dataset(manifest, train_samples, train_labels),
        Dataset(manifest, eval_samples_map, eval_labels),
        _rule_spec(planted, timesteps, gain),
        truth,
    )


def coverage_benchmark(
    group_size: int = 49,
    fixable: int = 28,
    variables: int = 4,
    timesteps: int = 16,
    train_normals: int = 30,
    train_abnormals: int = 15,
    seed: int = 0,
    gain: float = 4.0,
) -> Benchmark:
    """One (normal, abnormal) misclassification group with an exactly known
    number of members correctable by the seed's substitutions.

    The classifier requires var0 and var1 to have positive means. The first
    ``fixable`` eval samples (including the seed) break only var0, so the
    seed's single-variable fix transfers to all of them; the rest break var1
    and stay misclassified.
    """
    if not 1 <= fixable <= group_size:
        raise ValueError(f"fixable {fixable} out of range for group_size {group_size}")
    if variables < 2:
        raise ValueError("coverage benchmark needs at least two variables")
    rng = np.random.default_rng(seed)
    manifest = Manifest(
        CLASS_NAMES, tuple(f"var{i}" for i in range(variables)), timesteps
    )
    planted = [0, 1]

    train_samples, train_labels = {}, {}
    for i in range(train_normals):
        sid = f"t{i:03d}"
        train_samples[sid] = _series(
            manifest, _sample_values(rng, variables, timesteps, {0: 1.0, 1: 1.0})
        )
        train_labels[sid] = NORMAL
    for i in range(train_abnormals):
        sid = f"t{train_normals + i:03d}"
        train_samples[sid] = _series(
            manifest, _sample_values(rng, variables, timesteps, {0: -1.0, 1: -1.0})
        )
        train_labels[sid] = ABNORMAL

    eval_samples_map, eval_labels = {}, {}
    fixable_ids = []
    for i in range(group_size):
        sid = f"e{i:03d}"
        if i < fixable:
            means = {0: -1.0, 1: 1.0}  # broken var0 only: seed's fix applies
            fixable_ids.append(sid)
        else:
            means = {0: 1.0, 1: -1.0}  # broken var1: seed's fix cannot help
        eval_samples_map[sid] = _series(
            manifest, _sample_values(rng, variables, timesteps, means)
        )
        eval_labels[sid] = NORMAL  # labelled normal, predicted abnormal

    truth = {
        "group": {"true_label": CLASS_NAMES[NORMAL], "predicted_label": CLASS_NAMES[ABNORMAL]},
        "group_size": group_size,
        "expected_hits": fixable,
        "fixable_ids": fixable_ids,
        "seed_substitution": [manifest.variable_names[0]],
    }
    return Benchmark(
        Dataset(manifest, train_samples, train_labels),
        Dataset(manifest, eval_samples_map, eval_labels),
        _rule_spec(planted, timesteps, gain),
        truth,
    )
