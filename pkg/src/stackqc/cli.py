"""Command-line interface: one executable, one subcommand per pipeline stage.

Exit codes: 0 success, 1 input/validation problem (including usage errors),
2 unexpected runtime failure.  Every run writes a JSON log with versions,
arguments and seeds next to its main output, so any result can be reproduced
from the log alone.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

import stackqc
from stackqc.errors import StackQcError

DATASET_ENV = "STACKQC_DATASET_ROOT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_run_log(out: Path, command: str, args: dict, seeds: dict) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    log = {
        "command": command,
        "args": {k: str(v) for k, v in args.items()},
        "seeds": seeds,
        "versions": {
            "stackqc": stackqc.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    out.write_text(json.dumps(log, indent=1) + "\n")


def _load_inputs(manifest_path, iqms_path=None, labels_path=None):
    from stackqc.io.manifest import load_manifest
    from stackqc.iqm.extractor import read_iqm_csv
    from stackqc.phantom.dataset import load_labels

    records = load_manifest(manifest_path)
    iqm_df = read_iqm_csv(iqms_path) if iqms_path else None
    labels = load_labels(labels_path) if labels_path else None
    return records, iqm_df, labels


# --- subcommand implementations ----------------------------------------------------


def cmd_phantom(args) -> int:
    from stackqc.phantom.dataset import gen_dataset, within_subject_correlation

    ds = gen_dataset(
        args.out,
        n_sites=args.sites,
        n_scanners_per_site=args.scanners_per_site,
        n_subjects_per_scanner=args.subjects_per_scanner,
        stacks_per_subject=(args.stacks_min, args.stacks_max),
        master_seed=args.seed,
        pure_test_scanners=args.pure_test_scanners,
    )
    corr = within_subject_correlation(ds.records, ds.ratings)
    print(f"generated {len(ds.records)} stacks under {ds.root}")
    print(f"within-subject rating correlation: {corr:.3f}")
    _write_run_log(Path(args.out) / "run_log.json", "phantom", vars(args), {"master_seed": args.seed})
    return 0


def _resolve_manifest(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    root = getattr(args, "dataset", None) or os.environ.get(DATASET_ENV)
    if root:
        return Path(root) / "manifest.tsv"
    raise StackQcError("pass --manifest (or --dataset / $" + DATASET_ENV + ")")


def cmd_extract(args) -> int:
    from stackqc.iqm.extractor import IqmExtractor, export_csv
    from stackqc.io.manifest import load_manifest

    records = load_manifest(_resolve_manifest(args))
    extractor = IqmExtractor(
        jobs=args.jobs,
        label_mapping_path=args.label_mapping,
        dl_sidecar_path=args.dl_sidecar,
        allow_fallback_mask=not args.no_fallback_mask,
    )
    df = extractor.fit_transform(records)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # write through the canonical 9-significant-digit CSV schema
    from stackqc.iqm.extractor import IqmVector

    vectors = []
    for _, row in df.iterrows():
        values = {}
        flags = {}
        for entry in extractor.catalogue_:
            values[entry.name] = float(row[entry.name])
            flags[entry.name] = bool(row[entry.name + "_nan"])
        vectors.append(IqmVector(stack_id=row["stack_id"], values=values, flags=flags))
    export_csv(vectors, records, out)
    print(f"wrote {len(vectors)} rows x {2 * len(extractor.catalogue_)} feature columns to {out}")
    _write_run_log(out.with_suffix(".run_log.json"), "extract", vars(args), {})
    return 0


def cmd_report(args) -> int:
    from stackqc.io.manifest import load_manifest
    from stackqc.io.nifti import read_mask, read_nifti
    from stackqc.iqm.extractor import fallback_mask
    from stackqc.report.render import render_reports

    records = load_manifest(_resolve_manifest(args))

    def load_volume(rec):
        return read_nifti(rec.image_path)

    def load_mask(rec):
        if rec.mask_path:
            return read_mask(rec.mask_path)
        if args.no_fallback_mask:
            return None
        return fallback_mask(read_nifti(rec.image_path))

    index = render_reports(records, load_volume, load_mask, args.out, widget_bundle=args.widget_bundle)
    print(f"rendered {len(records)} reports; index at {index}")
    _write_run_log(Path(args.out) / "run_log.json", "report", vars(args), {})
    return 0


def cmd_serve(args) -> int:
    from stackqc.report.server import serve

    _write_run_log(Path(args.ratings).with_suffix(".run_log.json"), "serve", vars(args), {})
    print(f"serving {args.reports} on http://{args.host}:{args.port} (Ctrl-C to stop)")
    serve(args.reports, args.ratings, host=args.host, port=args.port)
    return 0


def cmd_ratings_aggregate(args) -> int:
    from stackqc.io.manifest import load_manifest
    from stackqc.report.ratings import aggregate_ratings, write_labels_csv

    records = load_manifest(_resolve_manifest(args), check_paths=False)
    labels, paired, skipped = aggregate_ratings(
        args.ratings,
        [r.stack_id for r in records],
        policy=args.policy,
        primary_rater=args.primary_rater,
    )
    out = write_labels_csv(labels, args.out)
    print(f"wrote {len(labels)} labels to {out} ({len(skipped)} unknown-stack rows skipped)")
    if args.paired_out:
        lines = ["stack_id,rating_a,rating_b"]
        lines += [f"{s},{a:.6g},{b:.6g}" for s, a, b in paired]
        Path(args.paired_out).write_text("\n".join(lines) + "\n")
        print(f"wrote {len(paired)} paired ratings to {args.paired_out}")
    _write_run_log(out.with_suffix(".run_log.json"), "ratings-aggregate", vars(args), {})
    return 0


def _feature_subset(args, iqm_df):
    if not getattr(args, "features", None):
        return None
    names = [l.strip() for l in Path(args.features).read_text().splitlines() if l.strip()]
    return names


def _labels_for_task(labels, task):
    from stackqc.evaluation.protocol import labels_to_targets

    return labels_to_targets(labels, task)


def cmd_train(args) -> int:
    from stackqc.evaluation.protocol import FeatureTable
    from stackqc.iqm.extractor import read_iqm_csv
    from stackqc.ml.forest import ForestClassifier, ForestRegressor
    from stackqc.ml.model_io import save_forest
    from stackqc.phantom.dataset import load_labels

    iqm_df = read_iqm_csv(args.iqms)
    labels = load_labels(args.labels)
    rows = iqm_df[iqm_df["split"] == "train"] if "split" in iqm_df.columns else iqm_df
    rows = rows[rows["stack_id"].isin(labels)]
    if len(rows) < 2:
        raise StackQcError("fewer than 2 labelled train-split rows")
    table = FeatureTable(rows, _feature_subset(args, rows))
    ids = [str(s) for s in rows["stack_id"]]
    X = table.matrix(ids)
    targets = _labels_for_task(labels, args.task)
    y = np.array([targets[s] for s in ids])
    model_cls = ForestClassifier if args.task == "qc" else ForestRegressor
    model = model_cls(n_trees=args.trees, seed=args.seed).fit(X, y)
    out = save_forest(model, args.out)
    print(f"trained {args.task} forest on {len(ids)} stacks -> {out}")
    _write_run_log(out.with_suffix(".run_log.json"), "train", vars(args), {"seed": args.seed})
    return 0


def cmd_predict(args) -> int:
    from stackqc.evaluation.protocol import FeatureTable
    from stackqc.iqm.extractor import read_iqm_csv
    from stackqc.ml.forest import ForestClassifier
    from stackqc.ml.model_io import load_forest

    model = load_forest(args.model)
    iqm_df = read_iqm_csv(args.iqms)
    table = FeatureTable(iqm_df, model.feature_names_in_)
    ids = [str(s) for s in iqm_df["stack_id"]]
    X = table.matrix(ids)
    lines = []
    if isinstance(model, ForestClassifier):
        scores = model.predict_proba(X)[:, 1]
        labels = (scores >= 0.5).astype(int)
        lines.append("stack_id,score,include")
        lines += [f"{s},{sc:.6g},{lb}" for s, sc, lb in zip(ids, scores, labels)]
    else:
        scores = model.predict(X)
        lines.append("stack_id,prediction")
        lines += [f"{s},{sc:.6g}" for s, sc in zip(ids, scores)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(ids)} predictions to {out}")
    _write_run_log(out.with_suffix(".run_log.json"), "predict", vars(args), {})
    return 0


def cmd_evaluate(args) -> int:
    from stackqc.evaluation.protocol import (
        report_to_table,
        run_baseline_protocol,
        run_protocol,
        scanner_breakdown_table,
    )

    records, iqm_df, labels = _load_inputs(_resolve_manifest(args), args.iqms, args.labels)
    protocol = args.protocol.replace("-", "_")
    report = run_protocol(
        records,
        iqm_df,
        labels,
        protocol,
        args.task,
        repetitions=args.repetitions,
        master_seed=args.seed,
        n_trees=args.trees,
        feature_subset=_feature_subset(args, iqm_df),
    )
    reports = [report]
    if not args.no_baselines:
        volumes = {str(s): float(v) for s, v in zip(iqm_df["stack_id"], iqm_df["mask_volume"])}
        reports.append(
            run_baseline_protocol(
                records, labels, protocol, args.task,
                mask_volumes=volumes if args.task == "qc" else None,
            )
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = report_to_table(reports)
    (out_dir / f"results_{protocol}_{args.task}.tsv").write_text(table)
    (out_dir / f"scanner_breakdown_{protocol}_{args.task}.tsv").write_text(
        scanner_breakdown_table(report)
    )
    print(table, end="")
    _write_run_log(out_dir / "run_log.json", "evaluate", vars(args), {"seeds": report.seeds})
    return 0


def cmd_experiment_subsample(args) -> int:
    from stackqc.evaluation.subsample import subsample_experiment, subsample_table

    records, iqm_df, labels = _load_inputs(_resolve_manifest(args), args.iqms, args.labels)
    scanner_counts = [int(v) for v in args.scanners.split(",")]
    train_sizes = [int(v) for v in args.sizes.split(",")]
    cells = subsample_experiment(
        records,
        iqm_df,
        labels,
        scanner_counts=scanner_counts,
        train_sizes=train_sizes,
        repetitions=args.repetitions,
        master_seed=args.seed,
        task=args.task,
        n_trees=args.trees,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = subsample_table(cells)
    (out_dir / f"subsample_{args.task}.tsv").write_text(text)
    print(text, end="")
    _write_run_log(out_dir / "run_log.json", "experiment-subsample", vars(args), {"master_seed": args.seed})
    return 0


def cmd_select(args) -> int:
    from stackqc.evaluation.protocol import FeatureTable, labels_to_targets
    from stackqc.evaluation.splits import loso_split
    from stackqc.iqm.catalogue import build_catalogue
    from stackqc.ml.forest import ForestClassifier, ForestRegressor
    from stackqc.ml.selection import correlation_group_rank

    records, iqm_df, labels = _load_inputs(_resolve_manifest(args), args.iqms, args.labels)
    table = FeatureTable(iqm_df)
    plan = loso_split(records)
    importances = {}
    for task, model_cls in (("qc", ForestClassifier), ("qa", ForestRegressor)):
        targets = labels_to_targets(labels, task)
        fold_imps = []
        for fold_index, fold in enumerate(plan.folds):
            X = table.matrix(fold.train_ids)
            y = np.array([targets[s] for s in fold.train_ids])
            model = model_cls(n_trees=args.trees, seed=args.seed + fold_index).fit(X, y)
            fold_imps.append(model.feature_importances_)
        importances[task] = dict(zip(table.feature_names, np.mean(fold_imps, axis=0)))
    exclude = []
    if not args.keep_dl:
        dl_names = [e.name for e in build_catalogue() if e.family == "dl"]
        exclude = dl_names + [n + "_nan" for n in dl_names]
    train_ids = [r.stack_id for r in records if r.split == "train"]
    ranking = correlation_group_rank(
        table.matrix(train_ids),
        importances["qc"],
        importances["qa"],
        threshold=args.threshold,
        k=args.top_k,
        exclude=exclude,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"selected_top{args.top_k}.txt").write_text("\n".join(ranking.selected) + "\n")
    lines = ["rank\tfeature\taveraged_importance"]
    lines += [
        f"{i + 1}\t{name}\t{ranking.importance[name]:.6g}"
        for i, name in enumerate(ranking.representatives[: max(args.top_k * 2, 40)])
    ]
    (out_dir / "ranking.tsv").write_text("\n".join(lines) + "\n")
    print("\n".join(ranking.selected))
    _write_run_log(out_dir / "run_log.json", "select", vars(args), {"seed": args.seed})
    return 0


# --- parser ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="stackqc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--sites", type=int, default=2)
    p.add_argument("--scanners-per-site", type=int, default=4)
    p.add_argument("--subjects-per-scanner", type=int, default=10)
    p.add_argument("--stacks-min", type=int, default=3)
    p.add_argument("--stacks-max", type=int, default=6)
    p.add_argument("--pure-test-scanners", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("extract", help="extract the IQM table")
    p.add_argument("--dataset", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--label-mapping", default=None)
    p.add_argument("--dl-sidecar", default=None)
    p.add_argument("--no-fallback-mask", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("report", help="render HTML QA reports")
    p.add_argument("--dataset", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--widget-bundle", default=None)
    p.add_argument("--no-fallback-mask", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="serve reports and collect ratings")
    p.add_argument("--reports", required=True)
    p.add_argument("--ratings", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("ratings", help="rating-log operations")
    rsub = p.add_subparsers(dest="ratings_command", required=True)
    pa = rsub.add_parser("aggregate", help="turn the ratings log into labels")
    pa.add_argument("--ratings", required=True)
    pa.add_argument("--dataset", default=None)
    pa.add_argument("--manifest", default=None)
    pa.add_argument("--out", required=True)
    pa.add_argument("--policy", choices=["latest_per_rater", "mean_across_raters"],
                    default="latest_per_rater")
    pa.add_argument("--primary-rater", default=None)
    pa.add_argument("--paired-out", default=None)
    pa.set_defaults(func=cmd_ratings_aggregate)

    p = sub.add_parser("train", help="fit a forest on the IQM table")
    p.add_argument("--iqms", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--task", choices=["qc", "qa"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score stacks with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--iqms", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="run an evaluation protocol")
    p.add_argument("--dataset", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--iqms", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--protocol", choices=["subject-cv", "loso", "pure-test"], required=True)
    p.add_argument("--task", choices=["qc", "qa"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--features", default=None)
    p.add_argument("--no-baselines", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="larger experiments")
    esub = p.add_subparsers(dest="experiment_command", required=True)
    ps = esub.add_parser("subsample", help="scanner-count x training-size grid")
    ps.add_argument("--dataset", default=None)
    ps.add_argument("--manifest", default=None)
    ps.add_argument("--iqms", required=True)
    ps.add_argument("--labels", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--scanners", default="1,2,3,4,5,6,7")
    ps.add_argument("--sizes", default="100,300,500,700,900")
    ps.add_argument("--repetitions", type=int, default=20)
    ps.add_argument("--task", choices=["qc", "qa"], default="qc")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--trees", type=int, default=100)
    ps.set_defaults(func=cmd_experiment_subsample)

    p = sub.add_parser("select", help="correlation-grouped top-k feature selection")
    p.add_argument("--dataset", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--iqms", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--keep-dl", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trees", type=int, default=100)
    p.set_defaults(func=cmd_select)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (StackQcError, FileNotFoundError, KeyError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # unexpected runtime failure
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
