"""Per-class nearest-neighbour stores over correctly classified samples.

A store holds one KD-tree per manifest class, indexing only the samples the
classifier labels the same as the dataset does. Queries retrieve the closest
candidates of a chosen target class; these supply the replacement values for
counterfactual search. Stores are immutable after build and safe for
concurrent queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierHandle, decide_label
from .data import Dataset, MultivariateSeries, flatten
from .kdtree import KDTree


class DistractorError(Exception):
    """Store construction or retrieval failure."""


@dataclass(frozen=True)
class DistractorStore:
    dataset: Dataset
    trees: dict[int, KDTree]
    class_ids: dict[int, tuple[str, ...]]

    def class_size(self, class_index: int) -> int:
        return self.trees[class_index].size


def build_store(dataset: Dataset, clf: ClassifierHandle) -> DistractorStore:
    """Index the correctly classified samples, partitioned by true label."""
    if not dataset.samples:
        raise DistractorError("cannot build a distractor store from an empty dataset")
    ids = dataset.ids()
    scores = clf.score_matrix(np.stack([dataset.samples[sid].values for sid in ids]))
    n_classes = len(dataset.manifest.class_names)
    dims = len(dataset.manifest.variable_names) * dataset.manifest.timesteps
    points: dict[int, list[np.ndarray]] = {c: [] for c in range(n_classes)}
    members: dict[int, list[str]] = {c: [] for c in range(n_classes)}
    for sid, row in zip(ids, scores):
        label = dataset.labels[sid]
        if decide_label(clf.rule, row) == label:
            points[label].append(flatten(dataset.samples[sid]))
            members[label].append(sid)
    trees = {
        c: KDTree(np.asarray(points[c]).reshape(len(points[c]), dims), members[c])
        for c in range(n_classes)
    }
    return DistractorStore(dataset, trees, {c: tuple(members[c]) for c in range(n_classes)})


def nearest_distractors(
    store: DistractorStore,
    query: MultivariateSeries,
    target: int,
    k: int,
) -> list[str]:
    """Ids of the min(k, tree size) stored target-class samples closest to
    the query, ascending by distance, ties broken by id."""
    if k < 1:
        raise DistractorError(f"k must be >= 1, got {k}")
    if target not in store.trees:
        raise DistractorError(f"unknown class index {target}")
    tree = store.trees[target]
    if tree.size == 0:
        name = store.dataset.manifest.class_names[target]
        raise DistractorError(f"no distractors available for class {name}")
    return [sid for _, sid in tree.query(flatten(query), min(k, tree.size))]
