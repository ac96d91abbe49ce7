"""Shared test fixtures: independent oracles and random case generators.

The oracles deliberately avoid the engine's own code paths: the k-NN oracle
is a full sort of all candidate distances, and the minimality oracle
enumerates every variable subset and scores the substituted samples directly.
"""

from __future__ import annotations

import numpy as np

from cfseries import (
    ClassifierHandle,
    Dataset,
    Manifest,
    MultivariateSeries,
    decide_label,
    flatten,
    make_builtin,
)


def make_dataset(values_by_id: dict[str, np.ndarray], labels: dict[str, int],
                 class_names=("c0", "c1"), variable_names=None) -> Dataset:
    first = next(iter(values_by_id.values()))
    n_vars, n_t = np.asarray(first).shape
    if variable_names is None:
        variable_names = tuple(f"var{i}" for i in range(n_vars))
    manifest = Manifest(tuple(class_names), tuple(variable_names), n_t)
    samples = {
        sid: MultivariateSeries(manifest.variable_names, np.asarray(v, dtype=float))
        for sid, v in values_by_id.items()
    }
    return Dataset(manifest, samples, dict(labels))


def linear_scan_knn(points: np.ndarray, ids: list[str], query: np.ndarray, k: int):
    """All candidates sorted by (Euclidean distance, id); first min(k, n)."""
    dists = np.sqrt(((points - query) ** 2).sum(axis=1))
    order = sorted(range(len(ids)), key=lambda i: (dists[i], ids[i]))
    return [(float(dists[i]), ids[i]) for i in order[: min(k, len(ids))]]


def brute_force_min_flip(clf: ClassifierHandle, original: np.ndarray,
                         distractor: np.ndarray, target: int) -> int | None:
    """Size of the smallest variable subset whose substitution flips the
    prediction to target, by scoring all 2^V substituted samples. None when
    even the full substitution fails."""
    n_vars = original.shape[0]
    subsets = []
    candidates = []
    for mask in range(1 << n_vars):
        out = original.copy()
        for v in range(n_vars):
            if mask >> v & 1:
                out[v] = distractor[v]
        subsets.append(mask)
        candidates.append(out)
    scores = clf.score_matrix(np.stack(candidates))
    best = None
    for mask, row in zip(subsets, scores):
        if decide_label(clf.rule, row) == target:
            size = bin(mask).count("1")
            if best is None or size < best:
                best = size
    return best


def brute_force_flip_sets(clf, original, distractor, target) -> list[frozenset]:
    """Every feasible variable subset, for membership checks."""
    n_vars = original.shape[0]
    feasible = []
    candidates = []
    masks = list(range(1 << n_vars))
    for mask in masks:
        out = original.copy()
        for v in range(n_vars):
            if mask >> v & 1:
                out[v] = distractor[v]
        candidates.append(out)
    scores = clf.score_matrix(np.stack(candidates))
    for mask, row in zip(masks, scores):
        if decide_label(clf.rule, row) == target:
            feasible.append(frozenset(v for v in range(n_vars) if mask >> v & 1))
    return feasible


def random_builtin(rng, n_vars: int, n_t: int) -> ClassifierHandle:
    """A random reference classifier of one of the three built-in kinds."""
    kind = rng.choice(["nearest_centroid", "interval_rule", "linear_means"])
    if kind == "nearest_centroid":
        n_classes = int(rng.integers(2, 4))
        centroids = rng.normal(0, 1.5, size=(n_classes, n_vars * n_t))
        spec = {"kind": "nearest_centroid", "centroids": centroids.tolist()}
    elif kind == "interval_rule":
        n_rules = int(rng.integers(1, min(3, n_vars) + 1))
        rule_vars = rng.choice(n_vars, size=n_rules, replace=False)
        rules = []
        for v in rule_vars:
            t0 = int(rng.integers(0, n_t))
            t1 = int(rng.integers(t0 + 1, n_t + 1))
            rules.append(
                {
                    "variable": int(v),
                    "window": [t0, t1],
                    "threshold": float(rng.normal(0, 0.5)),
                    "gain": float(rng.uniform(2.0, 8.0)),
                }
            )
        spec = {"kind": "interval_rule", "rules": rules}
    else:
        spec = {
            "kind": "linear_means",
            "weights": rng.normal(0, 2.0, size=n_vars).tolist(),
            "bias": float(rng.normal(0, 0.5)),
        }
    return make_builtin(spec, expected_shape=(n_vars, n_t))


def random_labeled_case(rng, n_vars=None, n_t=None, n_samples=None):
    """Random dataset labelled by a random built-in classifier's own
    predictions, so every sample is correctly classified and the distractor
    store indexes everything."""
    n_vars = n_vars or int(rng.integers(2, 9))
    n_t = n_t or int(rng.integers(4, 33))
    n_samples = n_samples or int(rng.integers(20, 41))
    clf = random_builtin(rng, n_vars, n_t)
    values = rng.normal(0, 1.2, size=(n_samples, n_vars, n_t))
    labels = [decide_label(clf.rule, row) for row in clf.score_matrix(values)]
    class_names = tuple(f"c{i}" for i in range(clf.class_count))
    dataset = make_dataset(
        {f"s{i:03d}": values[i] for i in range(n_samples)},
        {f"s{i:03d}": labels[i] for i in range(n_samples)},
        class_names=class_names,
    )
    return dataset, clf


def pick_sample_and_target(rng, dataset, clf):
    """A (sample_id, target) pair with prediction != target and a nonempty
    target class, or None when the labelling is degenerate."""
    by_class: dict[int, list[str]] = {}
    for sid, label in dataset.labels.items():
        by_class.setdefault(label, []).append(sid)
    if len(by_class) < 2:
        return None
    classes = sorted(by_class)
    sid = str(rng.choice(sorted(dataset.samples)))
    own = dataset.labels[sid]
    targets = [c for c in classes if c != own]
    return sid, int(rng.choice(targets))
