"""Counterfactual search: the smallest distractor substitution that flips a
prediction to the target class.

The search space is the set of subsets of replaceable atoms. By default an
atom is one whole variable row; with windows enabled, atoms are
(variable, window) tiles on a fixed non-overlapping time grid. For each of
the k nearest distractors the engine runs random-restart hill climbing over
atom subsets, falls back to greedy forward selection when no restart reaches
the target class, and prunes the winner to an irreducible set. The best
result across distractors wins: fewer atoms first, then higher target score,
then earlier distractor.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import ClassifierHandle, decide_label
from .data import Dataset, Manifest, MultivariateSeries
from .distractors import DistractorStore, nearest_distractors

Window = tuple[int, int]
Atom = tuple[int, Window | None]


class SearchError(Exception):
    """Counterfactual search failure."""


class PreconditionError(SearchError):
    """The request violates a search precondition (e.g. the sample is
    already predicted as the target class)."""


class NoCounterfactualError(SearchError):
    """Every candidate distractor failed to flip the prediction, even under
    full substitution. Carries the best target score reached."""

    def __init__(self, message: str, best_score: float):
        super().__init__(message)
        self.best_score = best_score


@dataclass(frozen=True)
class SubstitutionSet:
    """The atoms whose values are replaced by the distractor's.

    Each atom pairs a variable index with an optional [t0, t1) window; a
    missing window means the whole series of that variable. Atoms are kept
    sorted and de-duplicated.
    """

    atoms: tuple[Atom, ...]

    def __post_init__(self):
        norm = []
        for atom in self.atoms:
            var, window = atom
            var = int(var)
            if var < 0:
                raise SearchError(f"negative variable index {var}")
            if window is not None:
                t0, t1 = int(window[0]), int(window[1])
                if not 0 <= t0 < t1:
                    raise SearchError(f"invalid window [{t0}, {t1})")
                window = (t0, t1)
            norm.append((var, window))
        deduped = sorted(set(norm), key=lambda a: (a[0], a[1] or (-1, -1)))
        object.__setattr__(self, "atoms", tuple(deduped))

    @classmethod
    def from_variables(cls, variables, window: Window | None = None) -> "SubstitutionSet":
        return cls(tuple((int(v), window) for v in variables))

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(sorted({v for v, _ in self.atoms}))

    def common_window(self) -> tuple[bool, Window | None]:
        """(True, w) when every atom shares window w (w may be None),
        else (False, None)."""
        windows = {w for _, w in self.atoms}
        if len(windows) <= 1:
            return True, next(iter(windows), None)
        return False, None

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 5
    max_iters_per_restart: int = 100
    k_distractors: int = 3
    rng_seed: int = 42
    initial_subset_size: int = 1
    enable_windows: bool = False
    window_width: int = 8

    def __post_init__(self):
        if self.restarts < 1:
            raise SearchError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters_per_restart < 1:
            raise SearchError(f"max_iters_per_restart must be >= 1, got {self.max_iters_per_restart}")
        if self.k_distractors < 1:
            raise SearchError(f"k_distractors must be >= 1, got {self.k_distractors}")
        if self.initial_subset_size < 0:
            raise SearchError(f"initial_subset_size must be >= 0, got {self.initial_subset_size}")
        if self.enable_windows and self.window_width < 1:
            raise SearchError(f"window_width must be >= 1, got {self.window_width}")


@dataclass(frozen=True)
class SearchStats:
    """Aggregates over the whole explain call: total hill-climbing restarts
    executed, total samples scored through the classifier, and whether the
    greedy fallback ran for any distractor."""

    restarts_used: int
    model_queries: int
    fallback_used: bool


@dataclass(frozen=True)
class Explanation:
    sample_id: str
    original_label: int
    target_label: int
    distractor_id: str
    substitutions: SubstitutionSet
    score_before: float
    score_after: float
    search_stats: SearchStats


def apply_substitution(
    original: MultivariateSeries,
    distractor: MultivariateSeries,
    subs: SubstitutionSet,
) -> MultivariateSeries:
    """Copy the distractor's values into the original over the substituted
    atoms; everything else is untouched. Inputs are not mutated."""
    if original.values.shape != distractor.values.shape:
        raise SearchError(
            f"shape mismatch: original {original.values.shape} vs "
            f"distractor {distractor.values.shape}"
        )
    out = original.values.copy()
    _splice(out, distractor.values, subs.atoms)
    return MultivariateSeries(original.variables, out, original.sample_rate_hz)


def _splice(out: np.ndarray, source: np.ndarray, atoms) -> None:
    n_vars, n_t = out.shape
    for var, window in atoms:
        if var >= n_vars:
            raise SearchError(f"variable index {var} out of range for V={n_vars}")
        if window is None:
            out[var] = source[var]
        else:
            t0, t1 = window
            if t1 > n_t:
                raise SearchError(f"window [{t0}, {t1}) out of range for T={n_t}")
            out[var, t0:t1] = source[var, t0:t1]


def _atom_grid(n_vars: int, n_t: int, cfg: SearchConfig) -> list[Atom]:
    if not cfg.enable_windows:
        return [(v, None) for v in range(n_vars)]
    windows = [(s, min(s + cfg.window_width, n_t)) for s in range(0, n_t, cfg.window_width)]
    return [(v, w) for v in range(n_vars) for w in windows]


def _restart_rng(seed: int, sample_id: str, distractor_id: str, restart: int) -> np.random.Generator:
    # never the salted builtin hash(): restarts must reseed identically across runs
    key = f"{seed}|{sample_id}|{distractor_id}|{restart}".encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class _CountingScorer:
    """Routes every scored sample through one counter so search stats report
    the exact number of model queries."""

    def __init__(self, clf: ClassifierHandle, target: int):
        self.clf = clf
        self.target = target
        self.queries = 0

    def evaluate(self, batch: np.ndarray) -> list[tuple[bool, float]]:
        """(feasible, target score) per sample in a (B, V, T) batch."""
        self.queries += len(batch)
        scores = self.clf.score_matrix(batch)
        return [
            (decide_label(self.clf.rule, row) == self.target, float(row[self.target]))
            for row in scores
        ]


def _better(a: tuple[int, bool, float], b: tuple[int, bool, float]) -> bool:
    """Strictly better under the search order. States are (size, feasible,
    target score): feasibility first; among feasible, smaller then higher
    score; among infeasible, higher score then smaller."""
    a_size, a_feas, a_score = a
    b_size, b_feas, b_score = b
    if a_feas != b_feas:
        return a_feas
    if a_feas:
        if a_size != b_size:
            return a_size < b_size
        return a_score > b_score
    if a_score != b_score:
        return a_score > b_score
    return a_size < b_size


@dataclass
class _DistractorResult:
    subset: frozenset | None  # atom indices, None when infeasible throughout
    score: float              # score_after when feasible, else best score seen
    restarts_used: int
    fallback_used: bool


def _search_one_distractor(
    scorer: _CountingScorer,
    original: np.ndarray,
    distractor: np.ndarray,
    atoms: list[Atom],
    cfg: SearchConfig,
    sample_id: str,
    distractor_id: str,
) -> _DistractorResult:
    n_atoms = len(atoms)

    def materialize(subset) -> np.ndarray:
        out = original.copy()
        _splice(out, distractor, [atoms[a] for a in subset])
        return out

    def evaluate(subsets) -> list[tuple[bool, float]]:
        return scorer.evaluate(np.stack([materialize(s) for s in subsets]))

    best_feasible: tuple[frozenset, float] | None = None
    best_score_seen = -np.inf

    # 1. random-restart hill climbing over atom subsets
    for restart in range(cfg.restarts):
        rng = _restart_rng(cfg.rng_seed, sample_id, distractor_id, restart)
        size = min(cfg.initial_subset_size, n_atoms)
        state = frozenset(int(a) for a in rng.choice(n_atoms, size=size, replace=False))
        feas, score = evaluate([state])[0]
        best_score_seen = max(best_score_seen, score)
        current = (state, feas, score)
        for _ in range(cfg.max_iters_per_restart):
            neighbors = [current[0] ^ {a} for a in range(n_atoms)]
            results = evaluate(neighbors)
            best_nb = None
            for nb, (nb_feas, nb_score) in zip(neighbors, results):
                best_score_seen = max(best_score_seen, nb_score)
                cand = (nb, nb_feas, nb_score)
                if best_nb is None or _better(
                    (len(cand[0]), cand[1], cand[2]), (len(best_nb[0]), best_nb[1], best_nb[2])
                ):
                    best_nb = cand
            if best_nb is None or not _better(
                (len(best_nb[0]), best_nb[1], best_nb[2]),
                (len(current[0]), current[1], current[2]),
            ):
                break  # local optimum
            current = best_nb
        if current[1]:
            if best_feasible is None or _better(
                (len(current[0]), True, current[2]),
                (len(best_feasible[0]), True, best_feasible[1]),
            ):
                best_feasible = (current[0], current[2])

    # 2. greedy forward selection when no restart reached the target
    fallback_used = False
    if best_feasible is None:
        fallback_used = True
        state = frozenset()
        while len(state) < n_atoms:
            additions = [a for a in range(n_atoms) if a not in state]
            candidates = [state | {a} for a in additions]
            results = evaluate(candidates)
            pick = None
            for cand, (feas, score) in zip(candidates, results):
                best_score_seen = max(best_score_seen, score)
                if pick is None or score > pick[2]:  # strict > keeps the lowest index
                    pick = (cand, feas, score)
            state = pick[0]
            if pick[1]:
                best_feasible = (state, pick[2])
                break

    if best_feasible is None:
        return _DistractorResult(None, best_score_seen, cfg.restarts, fallback_used)

    # 3. prune to an irreducible set: drop atoms in ascending order while the
    # flip survives, repeating to a fixpoint
    subset = set(best_feasible[0])
    changed = True
    while changed:
        changed = False
        for a in sorted(subset):
            trial = frozenset(subset - {a})
            if not trial:
                continue  # empty substitution is the original sample; never feasible here
            feas, _ = evaluate([trial])[0]
            if feas:
                subset.remove(a)
                changed = True
    feas, score = evaluate([frozenset(subset)])[0]
    if not feas:  # cannot happen with a deterministic classifier
        raise SearchError("pruned substitution set lost feasibility; classifier is unstable")
    return _DistractorResult(frozenset(subset), score, cfg.restarts, fallback_used)


def explain(
    clf: ClassifierHandle,
    store: DistractorStore,
    dataset: Dataset,
    sample_id: str,
    target: int,
    cfg: SearchConfig = SearchConfig(),
) -> Explanation:
    """Search the k nearest distractors of the target class and return the
    best irreducible substitution set that flips the sample's prediction."""
    if sample_id not in dataset.samples:
        raise SearchError(f"unknown sample {sample_id}")
    if not 0 <= target < len(dataset.manifest.class_names):
        raise SearchError(f"target class index {target} out of range")
    sample = dataset.samples[sample_id]

    scorer = _CountingScorer(clf, target)
    scores = clf.score_matrix(sample.values[np.newaxis])
    scorer.queries += 1
    original_label = decide_label(clf.rule, scores[0])
    score_before = float(scores[0][target])
    if original_label == target:
        raise PreconditionError(
            f"sample {sample_id} is already predicted as the target class "
            f"{dataset.manifest.class_names[target]}"
        )

    distractor_ids = nearest_distractors(store, sample, target, cfg.k_distractors)
    atoms = _atom_grid(sample.n_variables, sample.n_timesteps, cfg)

    best: tuple[_DistractorResult, str] | None = None
    best_infeasible = -np.inf
    restarts_total = 0
    fallback_any = False
    for distractor_id in distractor_ids:
        distractor = store.dataset.samples[distractor_id]
        result = _search_one_distractor(
            scorer, sample.values, distractor.values, atoms, cfg, sample_id, distractor_id
        )
        restarts_total += result.restarts_used
        fallback_any = fallback_any or result.fallback_used
        if result.subset is None:
            best_infeasible = max(best_infeasible, result.score)
            continue
        if best is None or _better(
            (len(result.subset), True, result.score),
            (len(best[0].subset), True, best[0].score),
        ):
            best = (result, distractor_id)

    if best is None:
        # full substitution equals the distractor itself, which the store only
        # indexes when it is classified as the target; diagnose which half broke
        stale = []
        for distractor_id in distractor_ids:
            batch = store.dataset.samples[distractor_id].values[np.newaxis]
            feas, _ = scorer.evaluate(batch)[0]
            if not feas:
                stale.append(distractor_id)
        if stale:
            detail = (
                f"distractor(s) {', '.join(stale)} are no longer classified as the "
                "target class: the store is stale or those samples were mislabeled"
            )
        else:
            detail = (
                "full substitution reproduces a distractor the classifier labels as "
                "the target, yet the search saw it fail: the classifier is "
                "non-deterministic"
            )
        raise NoCounterfactualError(
            f"no counterfactual found for sample {sample_id}: {detail}", best_infeasible
        )

    result, distractor_id = best
    substitutions = SubstitutionSet(tuple(atoms[a] for a in sorted(result.subset)))
    return Explanation(
        sample_id=sample_id,
        original_label=original_label,
        target_label=target,
        distractor_id=distractor_id,
        substitutions=substitutions,
        score_before=score_before,
        score_after=result.score,
        search_stats=SearchStats(restarts_total, scorer.queries, fallback_any),
    )


def explanation_to_dict(expl: Explanation, manifest: Manifest) -> dict:
    """JSON-ready form with class labels and variables rendered as names."""
    shared, window = expl.substitutions.common_window()
    subs: dict = {
        "variables": [manifest.variable_names[v] for v in expl.substitutions.variables],
        "window": list(window) if window is not None else None,
    }
    if not shared:
        subs["atoms"] = [
            [manifest.variable_names[v], None if w is None else list(w)]
            for v, w in expl.substitutions.atoms
        ]
    return {
        "sample_id": expl.sample_id,
        "original_label": manifest.class_names[expl.original_label],
        "target_label": manifest.class_names[expl.target_label],
        "distractor_id": expl.distractor_id,
        "substitutions": subs,
        "score_before": expl.score_before,
        "score_after": expl.score_after,
        "search_stats": {
            "restarts_used": expl.search_stats.restarts_used,
            "model_queries": expl.search_stats.model_queries,
            "fallback_used": expl.search_stats.fallback_used,
        },
    }


def explanation_from_dict(raw: dict, manifest: Manifest) -> Explanation:
    subs_raw = raw["substitutions"]
    if "atoms" in subs_raw:
        atoms = tuple(
            (manifest.variable_index(v), None if w is None else (int(w[0]), int(w[1])))
            for v, w in subs_raw["atoms"]
        )
        substitutions = SubstitutionSet(atoms)
    else:
        window = subs_raw.get("window")
        substitutions = SubstitutionSet.from_variables(
            [manifest.variable_index(v) for v in subs_raw["variables"]],
            None if window is None else (int(window[0]), int(window[1])),
        )
    stats_raw = raw.get("search_stats", {})
    return Explanation(
        sample_id=raw["sample_id"],
        original_label=manifest.class_index(raw["original_label"]),
        target_label=manifest.class_index(raw["target_label"]),
        distractor_id=raw["distractor_id"],
        substitutions=substitutions,
        score_before=float(raw["score_before"]),
        score_after=float(raw["score_after"]),
        search_stats=SearchStats(
            int(stats_raw.get("restarts_used", 0)),
            int(stats_raw.get("model_queries", 0)),
            bool(stats_raw.get("fallback_used", False)),
        ),
    )
