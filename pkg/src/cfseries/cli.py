"""Command-line interface.

Subcommands: explain, eval comprehensibility, eval coverage, filter, plot,
gen-synthetic. Every run validates its full configuration before the first
model query, writes machine-readable JSON (plus SVG / tables / figures where
asked), and is byte-reproducible for a fixed --seed. Exit codes: 0 success,
2 no counterfactual found, 1 configuration or model error.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys

import numpy as np

from .bridge import BridgeConfig, BridgeError, open_bridge
from .classifier import (
    ClassifierHandle,
    PredictionRule,
    ScoringError,
    decide_label,
    load_builtin,
)
from .data import Dataset, DatasetError, load_dataset, quality_filter, save_dataset
from .distractors import DistractorError, build_store
from .evaluate import (
    EvalError,
    comprehensibility_table,
    comprehensibility_to_dict,
    coverage_table,
    coverage_to_dict,
    eval_comprehensibility,
    eval_coverage,
)
from .search import (
    NoCounterfactualError,
    SearchConfig,
    SearchError,
    apply_substitution,
    explain,
    explanation_from_dict,
    explanation_to_dict,
)
from .svgplot import render_overlay
from .synthetic import coverage_benchmark, planted_benchmark

_CONFIG_ERRORS = (
    DatasetError,
    DistractorError,
    ScoringError,
    BridgeError,
    EvalError,
    SearchError,
    ValueError,
    OSError,
)


class CliError(Exception):
    pass


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _add_model_args(parser):
    parser.add_argument("--model", required=True,
                        help="builtin:<spec.json> or bridge:<command line>")
    parser.add_argument("--rule", default="argmax",
                        help="argmax (default) or thresholds:<file.json>")
    parser.add_argument("--background", default=None,
                        help="background class name (required with thresholds)")


def _add_search_args(parser):
    defaults = SearchConfig()
    parser.add_argument("--restarts", type=int, default=defaults.restarts)
    parser.add_argument("--max-iters", type=int, default=defaults.max_iters_per_restart)
    parser.add_argument("--k-distractors", type=int, default=defaults.k_distractors)
    parser.add_argument("--seed", type=int, default=defaults.rng_seed)
    parser.add_argument("--initial-subset-size", type=int, default=defaults.initial_subset_size)
    parser.add_argument("--windows", default="off",
                        help="window width in timesteps, or 'off' for whole variables")


def _add_filter_args(parser):
    parser.add_argument("--std-threshold", type=float, default=None,
                        help="drop training samples whose flattened std is below this")
    parser.add_argument("--class", dest="class_name", default=None,
                        help="restrict the std filter to one class")


def _search_config(args) -> SearchConfig:
    if args.windows == "off":
        enable, width = False, SearchConfig().window_width
    else:
        try:
            width = int(args.windows)
        except ValueError:
            raise CliError(f"--windows expects a width or 'off', got {args.windows!r}") from None
        enable = True
    return SearchConfig(
        restarts=args.restarts,
        max_iters_per_restart=args.max_iters,
        k_distractors=args.k_distractors,
        rng_seed=args.seed,
        initial_subset_size=args.initial_subset_size,
        enable_windows=enable,
        window_width=width,
    )


def _class_index(manifest, name: str) -> int:
    if name not in manifest.class_names:
        raise CliError(
            f"unknown class {name!r}; valid class names: {', '.join(manifest.class_names)}"
        )
    return manifest.class_names.index(name)


def _prediction_rule(args, manifest) -> PredictionRule:
    if args.rule == "argmax":
        if args.background is not None:
            raise CliError("--background only applies to the thresholds rule")
        return PredictionRule()
    if args.rule.startswith("thresholds:"):
        path = args.rule.split(":", 1)[1]
        if not os.path.isfile(path):
            raise CliError(f"thresholds file not found: {path}")
        if args.background is None:
            raise CliError("the thresholds rule requires --background <class name>")
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        thresholds = raw["thresholds"] if isinstance(raw, dict) else raw
        return PredictionRule(
            kind="thresholded",
            thresholds=tuple(float(t) for t in thresholds),
            background_class=_class_index(manifest, args.background),
        )
    raise CliError(f"--rule must be argmax or thresholds:<file>, got {args.rule!r}")


def _open_model(args, manifest, rule) -> ClassifierHandle:
    shape = (len(manifest.variable_names), manifest.timesteps)
    if args.model.startswith("builtin:"):
        path = args.model.split(":", 1)[1]
        if not os.path.isfile(path):
            raise CliError(f"builtin model spec not found: {path}")
        clf = load_builtin(path, rule, shape)
        if clf.class_count != len(manifest.class_names):
            raise CliError(
                f"model has {clf.class_count} classes, dataset has "
                f"{len(manifest.class_names)}"
            )
        return clf
    if args.model.startswith("bridge:"):
        command = tuple(shlex.split(args.model.split(":", 1)[1]))
        if not command:
            raise CliError("bridge model needs a nonempty command")
        return open_bridge(
            BridgeConfig(command), (shape[0], shape[1], len(manifest.class_names)), rule
        )
    raise CliError(f"--model must start with builtin: or bridge:, got {args.model!r}")


def _load_train(args) -> tuple[Dataset, list[str]]:
    dataset = load_dataset(args.dataset)
    removed: list[str] = []
    if args.std_threshold is not None:
        class_filter = None
        if args.class_name is not None:
            class_filter = _class_index(dataset.manifest, args.class_name)
        dataset, removed = quality_filter(dataset, class_filter, args.std_threshold)
    return dataset, removed


def _cmd_explain(args) -> int:
    train, _ = _load_train(args)
    manifest = train.manifest
    sample_ds = train
    if args.eval_dataset is not None:
        sample_ds = load_dataset(args.eval_dataset)
        if sample_ds.manifest != manifest:
            raise CliError("train and eval datasets have different manifests")
    target = _class_index(manifest, args.target)
    if args.sample not in sample_ds.samples:
        where = args.eval_dataset if args.eval_dataset is not None else args.dataset
        raise CliError(f"unknown sample {args.sample!r} in {where}")
    rule = _prediction_rule(args, manifest)
    cfg = _search_config(args)
    clf = _open_model(args, manifest, rule)
    try:
        store = build_store(train, clf)
        expl = explain(clf, store, sample_ds, args.sample, target, cfg)
        _write_text(args.out, _dump_json(explanation_to_dict(expl, manifest)))
        if args.svg is not None:
            sample = sample_ds.samples[args.sample]
            counterfactual = apply_substitution(
                sample, store.dataset.samples[expl.distractor_id], expl.substitutions
            )
            svg = render_overlay(
                sample,
                counterfactual,
                expl.substitutions,
                {
                    "original_pred": manifest.class_names[expl.original_label],
                    "target": manifest.class_names[expl.target_label],
                },
            )
            _write_text(args.svg, svg)
    finally:
        clf.close()
    return 0


def _eval_common(args):
    train, _ = _load_train(args)
    manifest = train.manifest
    eval_ds = load_dataset(args.eval_dataset)
    if eval_ds.manifest != manifest:
        raise CliError("train and eval datasets have different manifests")
    rule = _prediction_rule(args, manifest)
    cfg = _search_config(args)
    clf = _open_model(args, manifest, rule)
    return train, eval_ds, manifest, clf, cfg


def _cmd_eval_comprehensibility(args) -> int:
    train, eval_ds, manifest, clf, cfg = _eval_common(args)
    target = _class_index(manifest, args.target)
    try:
        store = build_store(train, clf)
        if eval_ds.samples:
            scores = clf.score_matrix(
                np.stack([eval_ds.samples[s].values for s in eval_ds.ids()])
            )
        else:
            scores = []
        eval_ids = [
            sid
            for sid, row in zip(eval_ds.ids(), scores)
            if decide_label(clf.rule, row) != target
        ]
        report = eval_comprehensibility(clf, store, eval_ds, eval_ids, target, cfg)
        _write_text(args.out, _dump_json(comprehensibility_to_dict(report, manifest)))
        if args.table is not None:
            _write_text(args.table, comprehensibility_table(report, manifest))
        if args.fig is not None:
            from .figures import comprehensibility_figure

            comprehensibility_figure(report, manifest, args.fig)
    finally:
        clf.close()
    return 0


def _cmd_eval_coverage(args) -> int:
    train, eval_ds, manifest, clf, cfg = _eval_common(args)
    try:
        store = build_store(train, clf)
        report = eval_coverage(clf, store, eval_ds, eval_ds.ids(), cfg, args.min_group_size)
        _write_text(args.out, _dump_json(coverage_to_dict(report, manifest)))
        if args.table is not None:
            _write_text(args.table, coverage_table(report, manifest))
        if args.fig is not None:
            from .figures import coverage_figure

            coverage_figure(report, manifest, args.fig)
    finally:
        clf.close()
    return 0


def _cmd_filter(args) -> int:
    dataset = load_dataset(args.dataset)
    class_filter = None
    if args.class_name is not None:
        class_filter = _class_index(dataset.manifest, args.class_name)
    kept, removed = quality_filter(dataset, class_filter, args.std_threshold)
    save_dataset(kept, args.out)
    with open(os.path.join(args.out, "removed_ids.txt"), "w", encoding="utf-8") as fh:
        for sid in removed:
            fh.write(sid + "\n")
    sys.stderr.write(f"kept {len(kept)} samples, removed {len(removed)}\n")
    return 0


def _cmd_plot(args) -> int:
    dataset = load_dataset(args.dataset)
    manifest = dataset.manifest
    sample_ds = dataset
    if args.eval_dataset is not None:
        sample_ds = load_dataset(args.eval_dataset)
        if sample_ds.manifest != manifest:
            raise CliError("datasets have different manifests")
    with open(args.explanation, encoding="utf-8") as fh:
        expl = explanation_from_dict(json.load(fh), manifest)
    if expl.sample_id not in sample_ds.samples:
        raise CliError(f"sample {expl.sample_id!r} not found in the sample dataset")
    if expl.distractor_id not in dataset.samples:
        raise CliError(f"distractor {expl.distractor_id!r} not found in {args.dataset}")
    sample = sample_ds.samples[expl.sample_id]
    counterfactual = apply_substitution(
        sample, dataset.samples[expl.distractor_id], expl.substitutions
    )
    svg = render_overlay(
        sample,
        counterfactual,
        expl.substitutions,
        {
            "original_pred": manifest.class_names[expl.original_label],
            "target": manifest.class_names[expl.target_label],
        },
    )
    _write_text(args.out, svg)
    return 0


def _cmd_gen_synthetic(args) -> int:
    if args.kind == "planted":
        bench = planted_benchmark(
            planted_size=args.planted_size,
            variables=args.variables,
            timesteps=args.timesteps,
            eval_samples=args.eval_samples,
            seed=args.seed,
        )
    elif args.kind == "coverage":
        bench = coverage_benchmark(
            group_size=args.group_size,
            fixable=args.fixable,
            variables=max(args.variables, 2),
            timesteps=args.timesteps,
            seed=args.seed,
        )
    else:
        raise CliError(f"unknown benchmark kind {args.kind!r}")
    os.makedirs(args.out, exist_ok=True)
    save_dataset(bench.train, os.path.join(args.out, "train"))
    save_dataset(bench.eval, os.path.join(args.out, "eval"))
    _write_text(os.path.join(args.out, "model.json"), _dump_json(bench.model_spec))
    _write_text(os.path.join(args.out, "truth.json"), _dump_json(bench.truth))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfseries",
        description="Counterfactual explanations for black-box time-series classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="explain one sample toward a target class")
    p.add_argument("--dataset", required=True, help="dataset the distractor store is built from")
    p.add_argument("--eval-dataset", default=None,
                   help="dataset holding the sample, when not in --dataset")
    _add_model_args(p)
    _add_search_args(p)
    _add_filter_args(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--target", required=True, help="target class name")
    p.add_argument("--out", default=None, help="explanation JSON path (default stdout)")
    p.add_argument("--svg", default=None, help="also write the overlay plot here")
    p.set_defaults(func=_cmd_explain)

    pe = sub.add_parser("eval", help="run an evaluation harness")
    esub = pe.add_subparsers(dest="eval_command", required=True)

    pc = esub.add_parser("comprehensibility", help="substitution-count statistics")
    pc.add_argument("--dataset", required=True, help="training dataset (distractor store)")
    pc.add_argument("--eval-dataset", required=True)
    _add_model_args(pc)
    _add_search_args(pc)
    _add_filter_args(pc)
    pc.add_argument("--target", required=True)
    pc.add_argument("--out", default=None)
    pc.add_argument("--table", default=None, help="write the plain-text summary here")
    pc.add_argument("--fig", default=None, help="write a histogram figure here (png)")
    pc.set_defaults(func=_cmd_eval_comprehensibility)

    pv = esub.add_parser("coverage", help="coverage per misclassification type")
    pv.add_argument("--dataset", required=True, help="training dataset (distractor store)")
    pv.add_argument("--eval-dataset", required=True)
    _add_model_args(pv)
    _add_search_args(pv)
    _add_filter_args(pv)
    pv.add_argument("--min-group-size", type=int, default=1)
    pv.add_argument("--out", default=None)
    pv.add_argument("--table", default=None, help="write the aligned table here")
    pv.add_argument("--fig", default=None, help="write a coverage bar chart here (png)")
    pv.set_defaults(func=_cmd_eval_coverage)

    pf = sub.add_parser("filter", help="drop low-variability samples")
    pf.add_argument("--dataset", required=True)
    pf.add_argument("--std-threshold", type=float, default=0.1)
    pf.add_argument("--class", dest="class_name", default=None)
    pf.add_argument("--out", required=True, help="directory for the kept dataset")
    pf.set_defaults(func=_cmd_filter)

    pp = sub.add_parser("plot", help="render a stored explanation as SVG")
    pp.add_argument("--dataset", required=True, help="dataset holding the distractor")
    pp.add_argument("--eval-dataset", default=None, help="dataset holding the sample, if different")
    pp.add_argument("--explanation", required=True)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=_cmd_plot)

    pg = sub.add_parser("gen-synthetic", help="emit a planted-rule benchmark")
    pg.add_argument("--out", required=True)
    pg.add_argument("--kind", choices=("planted", "coverage"), default="planted")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--planted-size", type=int, default=2, choices=(1, 2, 3))
    pg.add_argument("--variables", type=int, default=6)
    pg.add_argument("--timesteps", type=int, default=16)
    pg.add_argument("--eval-samples", type=int, default=40)
    pg.add_argument("--group-size", type=int, default=49)
    pg.add_argument("--fixable", type=int, default=28)
    pg.set_defaults(func=_cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoCounterfactualError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except _CONFIG_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
