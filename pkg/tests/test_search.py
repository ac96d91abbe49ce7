import json

import numpy as np
import pytest

from cfseries import (
    ClassifierHandle,
    MultivariateSeries,
    NoCounterfactualError,
    PreconditionError,
    SearchConfig,
    SubstitutionSet,
    apply_substitution,
    build_store,
    decide_label,
    explain,
    explanation_from_dict,
    explanation_to_dict,
    make_builtin,
    predict_label,
)

from helpers import (
    brute_force_flip_sets,
    brute_force_min_flip,
    make_dataset,
    pick_sample_and_target,
    random_labeled_case,
)

FAST = SearchConfig(restarts=3, max_iters_per_restart=30)


def _series(values):
    values = np.asarray(values, dtype=float)
    return MultivariateSeries(tuple(f"var{i}" for i in range(values.shape[0])), values)


class CountingHandle(ClassifierHandle):
    """Wraps a handle and counts every sample scored through it."""

    def __init__(self, inner):
        self.inner = inner
        self.seen = 0
        super().__init__(self._score, inner.class_count, inner.rule,
                         inner.variables, inner.timesteps)

    def _score(self, batch):
        self.seen += len(batch)
        return self.inner.score_matrix(batch)


class TestApplySubstitution:
    def test_empty_substitution_is_identity(self):
        a, b = _series(np.zeros((2, 3))), _series(np.ones((2, 3)))
        out = apply_substitution(a, b, SubstitutionSet(()))
        np.testing.assert_array_equal(out.values, a.values)

    def test_full_substitution_is_distractor(self):
        rng = np.random.default_rng(0)
        a, b = _series(rng.normal(size=(3, 4))), _series(rng.normal(size=(3, 4)))
        out = apply_substitution(a, b, SubstitutionSet.from_variables([0, 1, 2]))
        np.testing.assert_array_equal(out.values, b.values)

    def test_single_row_splice(self):
        a = _series([[1, 1, 1], [2, 2, 2]])
        b = _series([[9, 9, 9], [8, 8, 8]])
        out = apply_substitution(a, b, SubstitutionSet.from_variables([1]))
        np.testing.assert_array_equal(out.values, [[1, 1, 1], [8, 8, 8]])

    def test_window_splice(self):
        a = _series([[1, 1, 1, 1]])
        b = _series([[9, 9, 9, 9]])
        out = apply_substitution(a, b, SubstitutionSet.from_variables([0], window=(1, 3)))
        np.testing.assert_array_equal(out.values, [[1, 9, 9, 1]])

    def test_original_not_mutated(self):
        a, b = _series(np.zeros((2, 3))), _series(np.ones((2, 3)))
        apply_substitution(a, b, SubstitutionSet.from_variables([0]))
        np.testing.assert_array_equal(a.values, np.zeros((2, 3)))

    def test_shape_mismatch_rejected(self):
        from cfseries import SearchError

        with pytest.raises(SearchError, match="shape mismatch"):
            apply_substitution(_series(np.zeros((2, 3))), _series(np.zeros((2, 4))),
                               SubstitutionSet(()))

    def test_invalid_window_rejected(self):
        from cfseries import SearchError

        with pytest.raises(SearchError, match="invalid window"):
            SubstitutionSet.from_variables([0], window=(3, 3))
        with pytest.raises(SearchError, match="out of range"):
            apply_substitution(
                _series(np.zeros((1, 3))), _series(np.zeros((1, 3))),
                SubstitutionSet.from_variables([0], window=(0, 9)),
            )


def _single_rule_case():
    """Classifier depends only on variable 2: positive iff its mean > 0."""
    clf = make_builtin(
        {
            "kind": "interval_rule",
            "rules": [{"variable": 2, "window": [0, 4], "threshold": 0.0, "gain": 10.0}],
        },
        expected_shape=(4, 4),
    )
    pos = np.zeros((4, 4))
    pos[2] = 1.0
    neg = np.zeros((4, 4))
    neg[2] = -1.0
    other_pos = np.full((4, 4), 0.3)
    other_pos[2] = 2.0
    dataset = make_dataset(
        {"neg1": neg, "pos1": pos, "pos2": other_pos},
        {"neg1": 0, "pos1": 1, "pos2": 1},
        class_names=("low", "high"),
    )
    return clf, dataset


class TestExplain:
    def test_planted_single_variable_recovered(self):
        clf, dataset = _single_rule_case()
        store = build_store(dataset, clf)
        expl = explain(clf, store, dataset, "neg1", 1, FAST)
        assert expl.substitutions.atoms == ((2, None),)
        assert expl.original_label == 0 and expl.target_label == 1
        # the brute-force oracle agrees {2} is the unique minimal flipping set
        distractor = dataset.samples[expl.distractor_id].values
        assert brute_force_min_flip(clf, dataset.samples["neg1"].values, distractor, 1) == 1
        minimal = [s for s in brute_force_flip_sets(clf, dataset.samples["neg1"].values,
                                                    distractor, 1) if len(s) == 1]
        assert minimal == [frozenset({2})]

    def test_conjunction_requires_both_variables(self):
        clf = make_builtin(
            {
                "kind": "interval_rule",
                "rules": [
                    {"variable": 1, "window": [0, 4], "threshold": 0.0, "gain": 10.0},
                    {"variable": 4, "window": [0, 4], "threshold": 0.0, "gain": 10.0},
                ],
            },
            expected_shape=(6, 4),
        )
        bad = np.zeros((6, 4))
        bad[1] = -1.0
        bad[4] = -1.0
        good = np.zeros((6, 4))
        good[1] = 1.0
        good[4] = 1.0
        dataset = make_dataset(
            {"bad": bad, "good": good}, {"bad": 0, "good": 1}
        )
        store = build_store(dataset, clf)
        expl = explain(clf, store, dataset, "bad", 1, FAST)
        assert expl.substitutions.atoms == ((1, None), (4, None))
        assert brute_force_min_flip(clf, bad, good, 1) == 2

    def test_precondition_already_target(self):
        clf, dataset = _single_rule_case()
        store = build_store(dataset, clf)
        with pytest.raises(PreconditionError, match="already predicted"):
            explain(clf, store, dataset, "pos1", 1, FAST)

    def test_validity_and_irreducibility_on_random_cases(self):
        rng = np.random.default_rng(100)
        checked = 0
        while checked < 30:
            dataset, clf = random_labeled_case(rng)
            case = pick_sample_and_target(rng, dataset, clf)
            if case is None:
                continue
            sid, target = case
            store = build_store(dataset, clf)
            expl = explain(clf, store, dataset, sid, target, FAST)
            sample = dataset.samples[sid]
            distractor = store.dataset.samples[expl.distractor_id]
            counterfactual = apply_substitution(sample, distractor, expl.substitutions)
            assert predict_label(clf, counterfactual) == target  # validity
            for atom in expl.substitutions.atoms:  # irreducibility
                reduced = SubstitutionSet(
                    tuple(a for a in expl.substitutions.atoms if a != atom)
                )
                weakened = apply_substitution(sample, distractor, reduced)
                assert predict_label(clf, weakened) != target
            assert len(expl.substitutions) >= 1
            checked += 1

    def test_score_after_above_threshold_when_thresholded(self):
        from cfseries import PredictionRule

        rng = np.random.default_rng(200)
        rule = PredictionRule("thresholded", (0.0, 0.6), 0)
        clf = make_builtin(
            {
                "kind": "interval_rule",
                "rules": [{"variable": 0, "window": [0, 4], "threshold": 0.0, "gain": 6.0}],
            },
            rule=rule,
            expected_shape=(3, 4),
        )
        values = {f"s{i}": rng.normal(0, 1, size=(3, 4)) for i in range(20)}
        labels = {
            sid: decide_label(rule, clf.score_matrix(v[np.newaxis])[0])
            for sid, v in values.items()
        }
        if 0 not in labels.values() or 1 not in labels.values():
            pytest.skip("degenerate draw")
        dataset = make_dataset(values, labels)
        store = build_store(dataset, clf)
        sid = next(s for s, l in labels.items() if l == 0)
        expl = explain(clf, store, dataset, sid, 1, FAST)
        assert expl.score_after >= 0.6

    def test_model_query_accounting_exact(self):
        rng = np.random.default_rng(300)
        dataset, clf = random_labeled_case(rng, n_vars=4, n_t=8, n_samples=25)
        case = pick_sample_and_target(rng, dataset, clf)
        if case is None:
            pytest.skip("degenerate draw")
        sid, target = case
        counting = CountingHandle(clf)
        store = build_store(dataset, counting)
        before_store = counting.seen
        expl = explain(counting, store, dataset, sid, target, FAST)
        assert expl.search_stats.model_queries == counting.seen - before_store

    def test_restart_and_fallback_stats(self):
        clf, dataset = _single_rule_case()
        store = build_store(dataset, clf)
        cfg = SearchConfig(restarts=4, k_distractors=2)
        expl = explain(clf, store, dataset, "neg1", 1, cfg)
        assert expl.search_stats.restarts_used == 4 * 2
        assert expl.search_stats.fallback_used is False


class TestDeterminism:
    def test_identical_runs_identical_serialization(self):
        rng = np.random.default_rng(400)
        dataset, clf = random_labeled_case(rng, n_vars=5, n_t=10, n_samples=30)
        case = pick_sample_and_target(rng, dataset, clf)
        if case is None:
            pytest.skip("degenerate draw")
        sid, target = case
        dumps = []
        for _ in range(2):
            store = build_store(dataset, clf)
            expl = explain(clf, store, dataset, sid, target, FAST)
            dumps.append(json.dumps(explanation_to_dict(expl, dataset.manifest), indent=2))
        assert dumps[0] == dumps[1]

    def test_different_seeds_may_differ_but_stay_valid(self):
        rng = np.random.default_rng(500)
        dataset, clf = random_labeled_case(rng, n_vars=6, n_t=8, n_samples=30)
        case = pick_sample_and_target(rng, dataset, clf)
        if case is None:
            pytest.skip("degenerate draw")
        sid, target = case
        store = build_store(dataset, clf)
        for seed in (1, 2, 3):
            cfg = SearchConfig(restarts=2, rng_seed=seed)
            expl = explain(clf, store, dataset, sid, target, cfg)
            counterfactual = apply_substitution(
                dataset.samples[sid], store.dataset.samples[expl.distractor_id],
                expl.substitutions,
            )
            assert predict_label(clf, counterfactual) == target


class TestOracleMinimality:
    def test_engine_matches_brute_force_floor(self):
        rng = np.random.default_rng(600)
        trials = matches = 0
        while trials < 40:
            dataset, clf = random_labeled_case(rng, n_vars=int(rng.integers(3, 7)))
            case = pick_sample_and_target(rng, dataset, clf)
            if case is None:
                continue
            sid, target = case
            store = build_store(dataset, clf)
            expl = explain(clf, store, dataset, sid, target, FAST)
            oracle = brute_force_min_flip(
                clf,
                dataset.samples[sid].values,
                store.dataset.samples[expl.distractor_id].values,
                target,
            )
            assert oracle is not None
            assert len(expl.substitutions) >= oracle  # brute force is the floor
            matches += len(expl.substitutions) == oracle
            trials += 1
        assert matches / trials >= 0.9


class TestWindows:
    def test_window_atom_recovered(self):
        clf = make_builtin(
            {
                "kind": "interval_rule",
                "rules": [{"variable": 1, "window": [0, 8], "threshold": 0.0, "gain": 10.0}],
            },
            expected_shape=(3, 16),
        )
        bad = np.zeros((3, 16))
        bad[1, :8] = -1.0
        good = np.zeros((3, 16))
        good[1, :8] = 1.0
        dataset = make_dataset({"bad": bad, "good": good}, {"bad": 0, "good": 1})
        store = build_store(dataset, clf)
        cfg = SearchConfig(restarts=3, enable_windows=True, window_width=8)
        expl = explain(clf, store, dataset, "bad", 1, cfg)
        assert expl.substitutions.atoms == ((1, (0, 8)),)

    def test_serialization_roundtrip_shared_window(self):
        clf, dataset = _single_rule_case()
        subs = SubstitutionSet.from_variables([2], window=(0, 2))
        from cfseries import Explanation, SearchStats

        expl = Explanation("neg1", 0, 1, "pos1", subs, 0.1, 0.9, SearchStats(3, 10, False))
        raw = explanation_to_dict(expl, dataset.manifest)
        assert raw["substitutions"] == {"variables": ["var2"], "window": [0, 2]}
        back = explanation_from_dict(raw, dataset.manifest)
        assert back.substitutions == subs

    def test_serialization_mixed_windows_uses_atoms(self):
        clf, dataset = _single_rule_case()
        subs = SubstitutionSet(((0, (0, 2)), (2, (2, 4))))
        from cfseries import Explanation, SearchStats

        expl = Explanation("neg1", 0, 1, "pos1", subs, 0.1, 0.9, SearchStats(3, 10, False))
        raw = explanation_to_dict(expl, dataset.manifest)
        assert raw["substitutions"]["atoms"] == [["var0", [0, 2]], ["var2", [2, 4]]]
        back = explanation_from_dict(raw, dataset.manifest)
        assert back.substitutions == subs


class TestNoCounterfactual:
    def test_stale_store_diagnosed(self):
        def constant(label):
            def scorer(batch):
                out = np.full((len(batch), 2), 0.1)
                out[:, label] = 0.9
                return out

            return ClassifierHandle(scorer, 2)

        ds = make_dataset(
            {"q": np.zeros((2, 3)), "d1": np.ones((2, 3))}, {"q": 0, "d1": 1}
        )
        store = build_store(ds, constant(1))  # labels everything 1: d1 indexed
        with pytest.raises(NoCounterfactualError, match="stale") as err:
            explain(constant(0), store, ds, "q", 1, FAST)
        assert 0.0 <= err.value.best_score <= 1.0

    def test_nondeterministic_classifier_diagnosed(self):
        train = {f"d{i}": np.full((4, 3), float(i + 1)) for i in range(2)}
        known = {v.tobytes() for v in (np.asarray(m, float) for m in train.values())}
        seen: dict[bytes, int] = {}

        def scorer(batch):
            out = np.tile([0.9, 0.1], (len(batch), 1))
            for i, m in enumerate(batch):
                key = np.ascontiguousarray(m).tobytes()
                if key in known:
                    if len(batch) > 1:
                        out[i] = [0.1, 0.9]
                    else:
                        seen[key] = seen.get(key, 0) + 1
                        if seen[key] >= 2:
                            out[i] = [0.1, 0.9]
            return out

        clf = ClassifierHandle(scorer, 2)
        values = dict(train)
        values["q"] = np.zeros((4, 3))
        labels = {sid: 1 for sid in train}
        labels["q"] = 0
        ds = make_dataset(values, labels)
        store = build_store(ds, clf)  # batch of 3: both d samples labelled 1
        assert store.trees[1].size == 2
        cfg = SearchConfig(restarts=1, max_iters_per_restart=1, k_distractors=2)
        with pytest.raises(NoCounterfactualError, match="non-deterministic"):
            explain(clf, store, ds, "q", 1, cfg)
