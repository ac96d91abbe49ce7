from fractions import Fraction

import numpy as np
import pytest

from cfseries import (
    EvalError,
    SearchConfig,
    apply_substitution,
    build_store,
    coverage_benchmark,
    coverage_table,
    coverage_to_dict,
    decide_label,
    eval_comprehensibility,
    eval_coverage,
    make_builtin,
    planted_benchmark,
    predict_label,
    rounded_percent,
)
from cfseries.evaluate import summarize_counts

from helpers import make_dataset

FAST = SearchConfig(restarts=3, max_iters_per_restart=30)


class TestCountStatistics:
    def test_mean_mode_histogram(self):
        mean, mode, hist = summarize_counts([2, 2, 4])
        assert abs(mean - 8 / 3) < 1e-12
        assert mode == 2
        assert hist == {2: 2, 4: 1}

    def test_singleton(self):
        mean, mode, hist = summarize_counts([3])
        assert mean == 3.0 and mode == 3 and hist == {3: 1}

    def test_mode_tie_takes_smallest(self):
        _, mode, _ = summarize_counts([5, 1, 5, 1])
        assert mode == 1

    def test_empty(self):
        assert summarize_counts([]) == (None, None, {})


class TestComprehensibility:
    def test_planted_benchmark_counts_match_violations(self):
        bench = planted_benchmark(planted_size=2, eval_samples=12, seed=3)
        clf = make_builtin(
            bench.model_spec,
            expected_shape=(
                len(bench.train.manifest.variable_names),
                bench.train.manifest.timesteps,
            ),
        )
        store = build_store(bench.train, clf)
        target = bench.train.manifest.class_index("normal")
        report = eval_comprehensibility(
            clf, store, bench.eval, bench.eval.ids(), target, FAST
        )
        assert not report.failures
        for sid, count in report.per_sample.items():
            assert count == len(bench.truth["eval_violations"][sid])

    def test_leakage_guard(self):
        bench = planted_benchmark(planted_size=1, eval_samples=4, seed=4)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        target = bench.train.manifest.class_index("normal")
        with pytest.raises(EvalError, match="leakage"):
            eval_comprehensibility(
                clf, store, bench.train, bench.train.ids()[:2], target, FAST
            )

    def test_rejects_sample_already_at_target(self):
        bench = planted_benchmark(planted_size=1, eval_samples=4, seed=5)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        abnormal = bench.train.manifest.class_index("abnormal")
        with pytest.raises(EvalError, match="already predicted"):
            eval_comprehensibility(
                clf, store, bench.eval, bench.eval.ids()[:2], abnormal, FAST
            )


class TestCoverage:
    def test_constructed_28_of_49(self):
        bench = coverage_benchmark(group_size=49, fixable=28, seed=7)
        manifest = bench.train.manifest
        clf = make_builtin(
            bench.model_spec,
            expected_shape=(len(manifest.variable_names), manifest.timesteps),
        )
        store = build_store(bench.train, clf)
        report = eval_coverage(clf, store, bench.eval, bench.eval.ids(), FAST)
        assert len(report.groups) == 1
        group = report.groups[0]
        assert (group.size, group.hits) == (49, 28)
        assert group.coverage == Fraction(28, 49)
        assert rounded_percent(group.coverage) == 57
        raw = coverage_to_dict(report, manifest)["groups"][0]
        assert raw["coverage"] == {
            "hits": 28,
            "n": 49,
            "value": float(Fraction(28, 49)),
            "percent": 57,
        }
        table = coverage_table(report, manifest)
        assert "57" in table and "49" in table
        assert table.splitlines()[0].startswith("Misclassification Type (True, Predicted)")

    def test_seed_fixes_only_itself_gives_1_over_n(self):
        bench = coverage_benchmark(group_size=5, fixable=1, seed=8)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        report = eval_coverage(clf, store, bench.eval, bench.eval.ids(), FAST)
        group = report.groups[0]
        assert group.hits == 1
        assert group.coverage == Fraction(1, 5)
        # re-apply the stored explanation to the seed and confirm the flip
        expl = group.explanation
        seed_sample = bench.eval.samples[group.seed_sample_id]
        distractor = store.dataset.samples[expl.distractor_id]
        fixed = apply_substitution(seed_sample, distractor, expl.substitutions)
        assert predict_label(clf, fixed) == group.true_label

    def test_shared_defect_gives_full_coverage(self):
        bench = coverage_benchmark(group_size=6, fixable=6, seed=16)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        report = eval_coverage(clf, store, bench.eval, bench.eval.ids(), FAST)
        group = report.groups[0]
        assert group.coverage == Fraction(1, 1)
        assert group.hits == group.size == 6

    def test_fixable_members_are_exactly_the_hits(self):
        bench = coverage_benchmark(group_size=12, fixable=5, seed=9)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        report = eval_coverage(clf, store, bench.eval, bench.eval.ids(), FAST)
        group = report.groups[0]
        expl = group.explanation
        distractor = store.dataset.samples[expl.distractor_id]
        hits = [
            sid
            for sid in bench.eval.ids()
            if predict_label(
                clf,
                apply_substitution(bench.eval.samples[sid], distractor, expl.substitutions),
            )
            == group.true_label
        ]
        assert hits == bench.truth["fixable_ids"]
        assert group.hits == len(hits) == 5

    def test_groups_sorted_and_reported_deterministically(self):
        rng = np.random.default_rng(15)
        clf = make_builtin(
            {
                "kind": "nearest_centroid",
                "centroids": [[-1.0] * 6, [0.0] * 6, [1.0] * 6],
            }
        )
        train_values = {
            "t0": np.full((2, 3), -1.0),
            "t1": np.full((2, 3), 0.0),
            "t2": np.full((2, 3), 1.0),
        }
        train = make_dataset(
            train_values, {"t0": 0, "t1": 1, "t2": 2}, class_names=("a", "b", "c")
        )
        store = build_store(train, clf)
        # eval: true labels deliberately disagree with predictions
        eval_values = {
            "e0": np.full((2, 3), 1.0),   # predicted c, labelled a -> group (0, 2)
            "e1": np.full((2, 3), 0.0),   # predicted b, labelled a -> group (0, 1)
            "e2": np.full((2, 3), -1.0),  # predicted a, labelled c -> group (2, 0)
        }
        eval_ds = make_dataset(
            eval_values, {"e0": 0, "e1": 0, "e2": 2}, class_names=("a", "b", "c")
        )
        report = eval_coverage(clf, store, eval_ds, eval_ds.ids(), FAST)
        keys = [(g.true_label, g.predicted_label) for g in report.groups]
        assert keys == sorted(keys)
        assert keys == [(0, 1), (0, 2), (2, 0)]

    def test_min_group_size_skips_small_groups(self):
        bench = coverage_benchmark(group_size=3, fixable=1, seed=10)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        report = eval_coverage(
            clf, store, bench.eval, bench.eval.ids(), FAST, min_group_size=10
        )
        assert report.groups == []

    def test_exact_rational_no_float_accumulation(self):
        bench = coverage_benchmark(group_size=7, fixable=3, seed=11)
        clf = make_builtin(bench.model_spec)
        store = build_store(bench.train, clf)
        report = eval_coverage(clf, store, bench.eval, bench.eval.ids(), FAST)
        group = report.groups[0]
        assert group.coverage == Fraction(3, 7)
        assert group.coverage * group.size == group.hits


class TestRoundedPercent:
    @pytest.mark.parametrize(
        "hits,n,expected",
        [(28, 49, 57), (1, 2, 50), (1, 3, 33), (2, 3, 67), (1, 8, 13), (43, 100, 43)],
    )
    def test_half_up_rounding(self, hits, n, expected):
        assert rounded_percent(Fraction(hits, n)) == expected
