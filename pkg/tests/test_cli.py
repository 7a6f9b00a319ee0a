import json

import pytest

from mllgraph.cli import ConfigError, apply_set, default_run_config, main, merge_config
from mllgraph.corpus import LabelVocabulary, load_dataset, synthetic_vocabulary
from mllgraph.metrics import METRIC_KEYS
from mllgraph.trainer import load_checkpoint

SMALL_SETS = [
    "--set", "synthetic.n_samples=120",
    "--set", "synthetic.sp_count=3",
    "--set", "synthetic.as_count=6",
    "--set", "synthetic.feature_dim=16",
    "--set", "synthetic.noise_sigma=1.0",
    "--set", "synthetic.samples_per_subject=5",
    "--set", "glove.d=8",
    "--set", "glove.epochs=30",
    "--set", "train.epochs=3",
    "--set", "train.batch_size=16",
    "--set", "encoder.layer_widths=[8,16]",
    "--set", "kmeans.n_clusters=4",
]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "synth"), *SMALL_SETS]) == 0
    assert main(["train", "--out", str(root / "crc"), *SMALL_SETS]) == 0
    assert main([
        "train", "--out", str(root / "single"), "--variant", "Single-MLL", *SMALL_SETS,
    ]) == 0
    assert main([
        "eval",
        "--checkpoint", str(root / "crc" / "checkpoint.mllg"),
        "--data", str(root / "synth" / "dataset.jsonl"),
        "--out", str(root / "eval"),
    ]) == 0
    return root


def test_default_config_covers_every_section():
    cfg = default_run_config()
    assert cfg["variant"] == "MLL-GCN-CRC"
    for key in ("seed", "out_dir", "data", "synthetic", "weighting", "adjacency",
                "glove", "encoder", "loss", "train", "kmeans", "metrics"):
        assert key in cfg


def test_merge_config_rejects_unknown_keys():
    cfg = default_run_config()
    merged = merge_config(cfg, {"train": {"epochs": 5}})
    assert merged["train"]["epochs"] == 5
    assert cfg["train"]["epochs"] == default_run_config()["train"]["epochs"]
    with pytest.raises(ConfigError, match="unknown config key: optimizer"):
        merge_config(cfg, {"optimizer": "adam"})
    with pytest.raises(ConfigError, match="unknown config key: train.lr"):
        merge_config(cfg, {"train": {"lr": 0.1}})


def test_apply_set_parses_json_values():
    cfg = default_run_config()
    apply_set(cfg, "train.epochs=7")
    apply_set(cfg, "encoder.layer_widths=[4,8]")
    apply_set(cfg, "data.dataset_path=corpus.jsonl")
    assert cfg["train"]["epochs"] == 7
    assert cfg["encoder"]["layer_widths"] == [4, 8]
    assert cfg["data"]["dataset_path"] == "corpus.jsonl"
    with pytest.raises(ConfigError, match="key=value"):
        apply_set(cfg, "train.epochs")
    with pytest.raises(ConfigError, match="unknown config key"):
        apply_set(cfg, "train.warmup=1")


def test_synth_writes_loadable_corpus(work):
    out = work / "synth"
    for name in ("dataset.jsonl", "vocabulary.json", "config.json"):
        assert (out / name).exists(), name
    vocab = LabelVocabulary.load(out / "vocabulary.json")
    assert vocab.size == 9
    data = load_dataset(out / "dataset.jsonl", vocab)
    assert len(data) == 120
    snapshot = json.loads((out / "config.json").read_text(encoding="utf-8"))
    assert snapshot["synthetic"]["n_samples"] == 120


def test_synth_rerun_is_byte_identical(work, tmp_path):
    again = tmp_path / "synth2"
    assert main(["synth", "--out", str(again), *SMALL_SETS]) == 0
    a = (work / "synth" / "dataset.jsonl").read_bytes()
    b = (again / "dataset.jsonl").read_bytes()
    assert a == b
    va = (work / "synth" / "vocabulary.json").read_bytes()
    vb = (again / "vocabulary.json").read_bytes()
    assert va == vb


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "x"), "--set", "synthetic.rho=1"]) == 2
    assert main(["synth", "--out", str(tmp_path / "x"), "--seed", "-1"]) == 2
    assert main(["train", "--out", str(tmp_path / "x"), "--variant", "MLL-MEGA"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    assert main(["synth", "--out", str(tmp_path / "x"), "--config", str(bad)]) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text('{"optimizer": "adam"}', encoding="utf-8")
    assert main(["synth", "--out", str(tmp_path / "x"), "--config", str(unknown)]) == 2
    listy = tmp_path / "list.json"
    listy.write_text("[1, 2]", encoding="utf-8")
    assert main(["synth", "--out", str(tmp_path / "x"), "--config", str(listy)]) == 2
    capsys.readouterr()


def test_train_requires_vocabulary_with_external_data(tmp_path):
    code = main([
        "train", "--out", str(tmp_path / "x"),
        "--set", "data.dataset_path=corpus.jsonl",
        *SMALL_SETS,
    ])
    assert code == 2


def test_train_writes_full_artifact_set(work):
    out = work / "crc"
    expected = (
        "checkpoint.mllg", "config.json", "vocabulary.json", "cooccurrence.csv",
        "correlation.csv", "embeddings.csv", "glove_trace.csv", "trace.csv",
        "sample_clusters.csv", "centroids.csv", "metrics_val.json",
        "metrics_test.json", "scores_val.csv", "scores_test.csv",
    )
    for name in expected:
        assert (out / name).exists(), name
    report = json.loads((out / "metrics_val.json").read_text(encoding="utf-8"))
    assert tuple(report.keys()) == METRIC_KEYS
    trace_lines = (out / "trace.csv").read_text(encoding="utf-8").splitlines()
    assert trace_lines[0] == "epoch,train_loss,val_exact_match"
    assert len(trace_lines) == 4
    cp = load_checkpoint(out / "checkpoint.mllg")
    assert cp.variant.name == "MLL-GCN-CRC"


def test_plain_variant_skips_graph_artifacts(work):
    out = work / "single"
    assert not (out / "correlation.csv").exists()
    assert not (out / "sample_clusters.csv").exists()
    assert not (out / "centroids.csv").exists()
    cp = load_checkpoint(out / "checkpoint.mllg")
    assert cp.classifier_kind == "linear"


def test_train_rerun_is_byte_identical(work, tmp_path):
    again = tmp_path / "crc2"
    assert main(["train", "--out", str(again), *SMALL_SETS]) == 0
    for name in ("checkpoint.mllg", "metrics_test.json", "scores_test.csv", "trace.csv"):
        assert (work / "crc" / name).read_bytes() == (again / name).read_bytes(), name


def test_eval_artifacts(work):
    out = work / "eval"
    for name in ("metrics.json", "scores.csv", "vocabulary.json", "per_class_ap.csv"):
        assert (out / name).exists(), name
    report = json.loads((out / "metrics.json").read_text(encoding="utf-8"))
    assert set(report) == set(METRIC_KEYS)
    ap_lines = (out / "per_class_ap.csv").read_text(encoding="utf-8").splitlines()
    assert ap_lines[0] == "name,ap"
    assert len(ap_lines) == 10


def test_eval_flag_validation(work, tmp_path):
    ckpt = str(work / "crc" / "checkpoint.mllg")
    data = str(work / "synth" / "dataset.jsonl")
    assert main(["eval", "--checkpoint", ckpt, "--data", data,
                 "--out", str(tmp_path / "e"), "--threshold", "1.5"]) == 2
    assert main(["eval", "--checkpoint", ckpt, "--data", data,
                 "--out", str(tmp_path / "e"), "--sp-mode", "top1"]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.mllg"), "--data", data,
                 "--out", str(tmp_path / "e")]) == 1


def test_export_targets(work, tmp_path):
    ckpt = str(work / "crc" / "checkpoint.mllg")
    for what, filename in (
        ("embeddings", "embeddings.csv"),
        ("correlation", "correlation.csv"),
        ("clusters", "centroids.csv"),
        ("projection", "projection.csv"),
    ):
        out = tmp_path / what
        assert main(["export", "--checkpoint", ckpt, "--what", what, "--out", str(out)]) == 0
        assert (out / filename).exists()
    proj_lines = (tmp_path / "projection" / "projection.csv").read_text(encoding="utf-8").splitlines()
    assert proj_lines[0] == "name,pc1,pc2"
    assert len(proj_lines) == 10


def test_export_rejects_missing_tensors(work, tmp_path):
    single = str(work / "single" / "checkpoint.mllg")
    assert main(["export", "--checkpoint", single, "--what", "correlation",
                 "--out", str(tmp_path / "a")]) == 2
    assert main(["export", "--checkpoint", single, "--what", "clusters",
                 "--out", str(tmp_path / "b")]) == 2


def test_metrics_oracle_agrees_with_eval_output(work, capsys):
    code = main([
        "metrics-oracle",
        "--scores", str(work / "eval" / "scores.csv"),
        "--report", str(work / "eval" / "metrics.json"),
        "--vocabulary", str(work / "eval" / "vocabulary.json"),
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert "all metrics agree with the oracle" in out


def test_metrics_oracle_skips_sp_acc_without_vocabulary(work, capsys):
    code = main([
        "metrics-oracle",
        "--scores", str(work / "eval" / "scores.csv"),
        "--report", str(work / "eval" / "metrics.json"),
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert "SP_ACC: skipped" in out


def test_metrics_oracle_flags_tampered_report(work, tmp_path, capsys):
    report = json.loads((work / "eval" / "metrics.json").read_text(encoding="utf-8"))
    report["MLL_ACC"] = round(report["MLL_ACC"] + 5.0, 2)
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(report), encoding="utf-8")
    code = main([
        "metrics-oracle",
        "--scores", str(work / "eval" / "scores.csv"),
        "--report", str(tampered),
        "--vocabulary", str(work / "eval" / "vocabulary.json"),
    ])
    captured = capsys.readouterr()
    assert code == 1
    assert "MISMATCH" in captured.out


def test_metrics_oracle_rejects_incomplete_report(work, tmp_path):
    partial = tmp_path / "partial.json"
    partial.write_text('{"MLL_ACC": 50.0}', encoding="utf-8")
    assert main([
        "metrics-oracle",
        "--scores", str(work / "eval" / "scores.csv"),
        "--report", str(partial),
    ]) == 2


def test_metrics_oracle_rejects_wrong_vocabulary(work, tmp_path):
    other = tmp_path / "vocab.json"
    synthetic_vocabulary(2, 2).save(other)
    assert main([
        "metrics-oracle",
        "--scores", str(work / "eval" / "scores.csv"),
        "--report", str(work / "eval" / "metrics.json"),
        "--vocabulary", str(other),
    ]) == 2
