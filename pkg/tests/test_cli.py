import json

import pandas as pd
import pytest

from stackqc.cli import main
from stackqc.phantom.dataset import gen_dataset


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    ds = gen_dataset(root, n_sites=1, n_scanners_per_site=3, n_subjects_per_scanner=4,
                     stacks_per_subject=(3, 4), master_seed=3)
    return ds


@pytest.fixture(scope="module")
def extracted(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("iqms") / "iqms.csv"
    code = main([
        "extract",
        "--manifest", str(small_dataset.manifest_path),
        "--out", str(out),
        "--jobs", "2",
        "--label-mapping", str(small_dataset.root / "label_mapping.tsv"),
    ])
    assert code == 0
    return out


def test_unknown_subcommand_exits_1(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_required_arg_exits_1():
    assert main(["extract"]) == 1


def test_phantom_command(tmp_path):
    code = main([
        "phantom", "--out", str(tmp_path / "d"), "--sites", "1",
        "--scanners-per-site", "2", "--subjects-per-scanner", "2",
        "--stacks-min", "3", "--stacks-max", "3", "--seed", "4",
    ])
    assert code == 0
    assert (tmp_path / "d" / "manifest.tsv").exists()
    assert (tmp_path / "d" / "labels.csv").exists()
    log = json.loads((tmp_path / "d" / "run_log.json").read_text())
    assert log["command"] == "phantom"
    assert log["versions"]["stackqc"]


def test_extract_emits_332_columns(extracted):
    df = pd.read_csv(extracted)
    assert df.shape[1] == 5 + 332
    nan_cols = [c for c in df.columns if c.endswith("_nan")]
    assert len(nan_cols) == 166


def test_train_predict_roundtrip(small_dataset, extracted, tmp_path):
    model = tmp_path / "model.txt"
    code = main([
        "train", "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
        "--task", "qa", "--out", str(model), "--trees", "20", "--seed", "1",
    ])
    assert code == 0
    pred = tmp_path / "pred.csv"
    code = main(["predict", "--model", str(model), "--iqms", str(extracted), "--out", str(pred)])
    assert code == 0
    rows = pred.read_text().splitlines()
    assert rows[0] == "stack_id,prediction"
    assert len(rows) == 1 + len(small_dataset.records)


def test_train_qc_classifier(small_dataset, extracted, tmp_path):
    model = tmp_path / "clf.txt"
    code = main([
        "train", "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
        "--task", "qc", "--out", str(model), "--trees", "20",
    ])
    assert code == 0
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model), "--iqms", str(extracted), "--out", str(pred)]) == 0
    assert pred.read_text().splitlines()[0] == "stack_id,score,include"


def test_evaluate_loso(small_dataset, extracted, tmp_path, capsys):
    out = tmp_path / "eval"
    code = main([
        "evaluate", "--manifest", str(small_dataset.manifest_path),
        "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
        "--protocol", "loso", "--task", "qc", "--out", str(out),
        "--repetitions", "1", "--trees", "15",
    ])
    assert code == 0
    table = (out / "results_loso_qc.tsv").read_text()
    assert table.splitlines()[0] == "method\tweighted_f1\troc_auc\tprecision\trecall"
    assert "forest" in table and "volume_rule" in table
    assert (out / "scanner_breakdown_loso_qc.tsv").exists()
    log = json.loads((out / "run_log.json").read_text())
    assert log["seeds"]["seeds"] == [0]


def test_select_top_k(small_dataset, extracted, tmp_path):
    out = tmp_path / "sel"
    code = main([
        "select", "--manifest", str(small_dataset.manifest_path),
        "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
        "--out", str(out), "--top-k", "10", "--trees", "10",
    ])
    assert code == 0
    selected = (out / "selected_top10.txt").read_text().splitlines()
    assert len(selected) == 10
    assert not any(s.startswith("dl_") for s in selected)


def test_experiment_subsample(small_dataset, extracted, tmp_path):
    out = tmp_path / "sub"
    code = main([
        "experiment", "subsample", "--manifest", str(small_dataset.manifest_path),
        "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
        "--out", str(out), "--scanners", "1,2", "--sizes", "8,2000",
        "--repetitions", "2", "--trees", "10",
    ])
    assert code == 0
    text = (out / "subsample_qc.tsv").read_text()
    assert "skipped" in text


def test_reports_and_ratings_aggregate(small_dataset, tmp_path):
    reports = tmp_path / "reports"
    code = main([
        "report", "--manifest", str(small_dataset.manifest_path), "--out", str(reports),
    ])
    assert code == 0
    assert (reports / "index.html").exists()
    ratings = tmp_path / "ratings.jsonl"
    sid = small_dataset.records[0].stack_id
    ratings.write_text(
        json.dumps({"stack_id": sid, "rater_id": "r1", "quality": 2.0,
                    "orientation": "axial", "artifacts": {}, "comment": "",
                    "duration_s": 5.0, "timestamp": "2026-01-01T00:00:00"}) + "\n"
    )
    labels_out = tmp_path / "labels.csv"
    code = main([
        "ratings", "aggregate", "--ratings", str(ratings),
        "--manifest", str(small_dataset.manifest_path), "--out", str(labels_out),
    ])
    assert code == 0
    assert labels_out.read_text() == f"stack_id,rating\n{sid},2\n"


def test_evaluate_reproducible(small_dataset, extracted, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main([
            "evaluate", "--manifest", str(small_dataset.manifest_path),
            "--iqms", str(extracted), "--labels", str(small_dataset.labels_path),
            "--protocol", "loso", "--task", "qc", "--out", str(out),
            "--repetitions", "1", "--trees", "10", "--seed", "5",
        ])
        assert code == 0
        outs.append((out / "results_loso_qc.tsv").read_text())
    assert outs[0] == outs[1]
