"""Command-line interface: synth, train, eval, export, metrics-oracle.

Every run is driven by one JSON config; flags and --set overrides rewrite
it before anything executes, and the resolved snapshot is written next to
the artifacts. Exit codes: 0 success, 1 runtime failure, 2 usage/config
error.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .cooccur import build_cooccurrence, write_matrix_csv
from .corpus import (
    Dataset,
    DatasetFormatError,
    LabelVocabulary,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_by_subject,
)
from .glove import GloveDivergenceError, write_embeddings_csv
from .metrics import (
    METRIC_KEYS,
    compute_report,
    format_report_json,
    read_score_csv,
    write_score_csv,
)
from .oracle import oracle_metrics
from .relabel import write_assignments_csv, write_centroids_csv
from .seeding import stage_seed
from .trainer import (
    CheckpointError,
    TrainingDivergedError,
    VariantSpec,
    VARIANT_NAMES,
    TrainConfig,
    evaluate,
    load_checkpoint,
    run_pipeline,
    save_checkpoint,
    score_dataset,
    train_config_from_dict,
    train_config_to_dict,
)


class ConfigError(ValueError):
    """Bad usage or configuration; maps to exit code 2."""


def default_run_config() -> dict:
    t = train_config_to_dict(TrainConfig())
    syn = dataclasses.asdict(SyntheticConfig())
    syn.pop("seed")
    return {
        "seed": 0,
        "variant": "MLL-GCN-CRC",
        "out_dir": "runs/default",
        "data": {
            "dataset_path": None,
            "vocabulary_path": None,
            "split_ratios": [0.45, 0.27, 0.28],
        },
        "synthetic": syn,
        "weighting": t["weighting"],
        "adjacency": t["adjacency"],
        "glove": t["glove"],
        "encoder": t["encoder"],
        "loss": t["loss"],
        "train": {
            "epochs": t["epochs"],
            "learning_rate": t["learning_rate"],
            "momentum": t["momentum"],
            "batch_size": t["batch_size"],
        },
        "kmeans": {
            "n_clusters": t["n_clusters"],
            "max_iter": t["kmeans_max_iter"],
            "tol": t["kmeans_tol"],
        },
        "metrics": {"threshold": 0.5, "sp_mode": "exact"},
    }


def merge_config(base: dict, override: dict, path: str = "") -> dict:
    """Recursive merge that rejects keys absent from the defaults."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = merge_config(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def apply_set(cfg: dict, expr: str) -> None:
    if "=" not in expr:
        raise ConfigError(f"--set expects key=value, got {expr!r}")
    key, _, raw = expr.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError(f"unknown config key: {key}")
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError(f"unknown config key: {key}")
    node[parts[-1]] = value


def resolve_config(args) -> dict:
    cfg = default_run_config()
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = merge_config(cfg, file_cfg)
    for expr in getattr(args, "set", None) or []:
        apply_set(cfg, expr)
    if getattr(args, "variant", None):
        cfg["variant"] = args.variant
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out_dir"] = args.out
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed: must be a nonnegative integer")
    return cfg


def build_synthetic_config(cfg: dict) -> SyntheticConfig:
    data = dict(cfg["synthetic"])
    try:
        sc = SyntheticConfig(**data, seed=stage_seed(cfg["seed"], "synthetic"))
        sc.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synthetic: {exc}") from exc
    return sc


def build_train_config(cfg: dict) -> TrainConfig:
    data = {
        "seed": cfg["seed"],
        **cfg["train"],
        "n_clusters": cfg["kmeans"]["n_clusters"],
        "kmeans_max_iter": cfg["kmeans"]["max_iter"],
        "kmeans_tol": cfg["kmeans"]["tol"],
        "loss": cfg["loss"],
        "glove": cfg["glove"],
        "weighting": cfg["weighting"],
        "adjacency": cfg["adjacency"],
        "encoder": cfg["encoder"],
    }
    try:
        return train_config_from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train config: {exc}") from exc


def _check_metrics_section(cfg: dict):
    m = cfg["metrics"]
    thr = m["threshold"]
    if not isinstance(thr, (int, float)) or not 0.0 <= float(thr) <= 1.0:
        raise ConfigError("metrics.threshold: must lie within [0, 1]")
    if m["sp_mode"] not in ("exact", "argmax"):
        raise ConfigError("metrics.sp_mode: must be 'exact' or 'argmax'")
    return float(thr), m["sp_mode"]


def _check_ratios(cfg: dict):
    ratios = cfg["data"]["split_ratios"]
    if (
        not isinstance(ratios, (list, tuple))
        or len(ratios) != 3
        or any(not isinstance(r, (int, float)) or r < 0 for r in ratios)
        or abs(sum(float(r) for r in ratios) - 1.0) > 1e-9
    ):
        raise ConfigError("data.split_ratios: need three nonnegative numbers summing to 1")
    return tuple(float(r) for r in ratios)


def _obtain_dataset(cfg: dict) -> Dataset:
    data = cfg["data"]
    if data["dataset_path"]:
        if not data["vocabulary_path"]:
            raise ConfigError("data.vocabulary_path: required when data.dataset_path is set")
        vocab = LabelVocabulary.load(data["vocabulary_path"])
        return load_dataset(data["dataset_path"], vocab)
    return generate_synthetic(build_synthetic_config(cfg))


def _write_config_snapshot(cfg: dict, out: Path) -> None:
    (out / "config.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(build_synthetic_config(cfg))
    save_dataset(dataset, out / "dataset.jsonl")
    dataset.vocabulary.save(out / "vocabulary.json")
    _write_config_snapshot(cfg, out)
    vocab = dataset.vocabulary
    print(
        f"wrote {len(dataset)} samples over {len(dataset.subject_ids())} subjects, "
        f"{vocab.size} classes ({vocab.sp_indices.size} SP / {vocab.as_indices.size} AS)"
    )
    print(f"artifacts in {out}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    try:
        variant = VariantSpec.from_name(cfg["variant"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    threshold, sp_mode = _check_metrics_section(cfg)
    ratios = _check_ratios(cfg)
    tcfg = build_train_config(cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    dataset = _obtain_dataset(cfg)
    train, val, test = split_by_subject(dataset, ratios, stage_seed(cfg["seed"], "split"))
    print(f"variant {variant.name}, seed {cfg['seed']}")
    print(f"split sizes: train {len(train)} / val {len(val)} / test {len(test)}")

    result = run_pipeline(train, val, variant, tcfg)
    cp = result.checkpoint
    save_checkpoint(cp, out / "checkpoint.mllg")
    _write_config_snapshot(cfg, out)
    dataset.vocabulary.save(out / "vocabulary.json")

    X = build_cooccurrence(train)
    write_matrix_csv(out / "cooccurrence.csv", X.counts, dataset.vocabulary.names)
    if cp.correlation is not None:
        write_matrix_csv(out / "correlation.csv", cp.correlation, dataset.vocabulary.names)
    write_embeddings_csv(out / "embeddings.csv", cp.embeddings, dataset.vocabulary.names)
    with open(out / "glove_trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(result.glove_loss_trace):
            fh.write(f"{i},{float(v)!r}\n")
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_exact_match\n")
        for r in result.trace:
            fh.write(f"{r.epoch},{r.train_loss!r},{r.val_exact_match!r}\n")
    if result.relabeled is not None:
        write_assignments_csv(out / "sample_clusters.csv", result.relabeled)
        write_centroids_csv(out / "centroids.csv", result.kmeans_result.model)

    for split, name in ((val, "val"), (test, "test")):
        if len(split) == 0:
            continue
        table = score_dataset(cp, split, threshold)
        report = compute_report(table, dataset.vocabulary.sp_indices, sp_mode)
        (out / f"metrics_{name}.json").write_text(format_report_json(report), encoding="utf-8")
        write_score_csv(
            out / f"scores_{name}.csv", table, [s.id for s in split.samples], dataset.vocabulary.names
        )
        scaled = {k: round(v * 100.0, 2) for k, v in report.as_dict().items()}
        print(f"{name}: " + " ".join(f"{k}={scaled[k]}" for k in ("MLL_ACC", "SP_ACC", "mAP", "HL")))

    print(f"best epoch {cp.epoch} (val exact-match {result.trace[cp.epoch - 1].val_exact_match:.4f})")
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    cp = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data, cp.vocabulary)
    if args.sp_mode not in ("exact", "argmax"):
        raise ConfigError("--sp-mode must be 'exact' or 'argmax'")
    if not 0.0 <= args.threshold <= 1.0:
        raise ConfigError("--threshold must lie within [0, 1]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = score_dataset(cp, dataset, args.threshold)
    report = compute_report(table, cp.vocabulary.sp_indices, args.sp_mode)
    (out / "metrics.json").write_text(format_report_json(report), encoding="utf-8")
    write_score_csv(out / "scores.csv", table, [s.id for s in dataset.samples], cp.vocabulary.names)
    cp.vocabulary.save(out / "vocabulary.json")
    with open(out / "per_class_ap.csv", "w", encoding="utf-8") as fh:
        fh.write("name,ap\n")
        for name, ap in zip(cp.vocabulary.names, report.per_class_ap):
            fh.write(f"{name},{'' if np.isnan(ap) else repr(float(ap))}\n")
    scaled = {k: round(v * 100.0, 2) for k, v in report.as_dict().items()}
    print(" ".join(f"{k}={scaled[k]}" for k in METRIC_KEYS))
    print(f"artifacts in {out}")
    return 0


def _pca_projection(Z: np.ndarray):
    mean = Z.mean(axis=0)
    centered = Z - mean
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    axes = Vt[:2].copy()
    for j in range(axes.shape[0]):
        k = int(np.argmax(np.abs(axes[j])))
        if axes[j, k] < 0:
            axes[j] = -axes[j]
    return centered @ axes.T, axes, mean


def cmd_export(args) -> int:
    cp = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = cp.vocabulary.names
    if args.what == "embeddings":
        write_embeddings_csv(out / "embeddings.csv", cp.embeddings, names)
    elif args.what == "correlation":
        if cp.correlation is None:
            raise ConfigError("checkpoint stores no correlation matrix (non-graph variant)")
        write_matrix_csv(out / "correlation.csv", cp.correlation, names)
    elif args.what == "clusters":
        if cp.centroids is None:
            raise ConfigError("checkpoint stores no cluster model (non-CRC variant)")
        with open(out / "centroids.csv", "w", encoding="utf-8") as fh:
            fh.write("cluster," + ",".join(f"c{j}" for j in range(cp.centroids.shape[1])) + "\n")
            for k, row in enumerate(cp.centroids):
                fh.write(str(k) + "," + ",".join(repr(float(v)) for v in row) + "\n")
    elif args.what == "projection":
        proj, axes, mean = _pca_projection(cp.embeddings)
        with open(out / "projection.csv", "w", encoding="utf-8") as fh:
            fh.write("name,pc1,pc2\n")
            for name, row in zip(names, proj):
                fh.write(f"{name},{float(row[0])!r},{float(row[1])!r}\n")
        with open(out / "projection_axes.csv", "w", encoding="utf-8") as fh:
            fh.write("component," + ",".join(f"e{j}" for j in range(axes.shape[1])) + "\n")
            fh.write("mean," + ",".join(repr(float(v)) for v in mean) + "\n")
            for j in range(axes.shape[0]):
                fh.write(f"pc{j + 1}," + ",".join(repr(float(v)) for v in axes[j]) + "\n")
    else:
        raise ConfigError(f"unknown export target: {args.what!r}")
    print(f"artifacts in {out}")
    return 0


def cmd_metrics_oracle(args) -> int:
    if not 0.0 <= args.threshold <= 1.0:
        raise ConfigError("--threshold must lie within [0, 1]")
    _, names, table = read_score_csv(args.scores, args.threshold)
    reported = json.loads(Path(args.report).read_text(encoding="utf-8"))
    missing = [k for k in METRIC_KEYS if k not in reported]
    if missing:
        raise ConfigError(f"report lacks keys: {missing}")
    sp_indices = None
    if args.vocabulary:
        vocab = LabelVocabulary.load(args.vocabulary)
        if vocab.names != tuple(names):
            raise ConfigError("vocabulary does not match the score file columns")
        sp_indices = vocab.sp_indices
    oracle = oracle_metrics(table.scores, table.targets, args.threshold, sp_indices)
    ok = True
    for key in METRIC_KEYS:
        if key == "SP_ACC" and sp_indices is None:
            print("SP_ACC: skipped (pass --vocabulary to check it)")
            continue
        want = round(oracle[key] * 100.0, 2)
        got = float(reported[key])
        if abs(got - want) <= 1e-9:
            print(f"{key}: ok ({got})")
        else:
            ok = False
            print(f"{key}: MISMATCH report={got} oracle={want}")
    if not ok:
        print("metrics disagree with the oracle", file=sys.stderr)
        return 1
    print("all metrics agree with the oracle")
    return 0


def _add_config_flags(p: argparse.ArgumentParser, with_variant: bool) -> None:
    p.add_argument("--config", help="JSON config file merged over the defaults")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config entry (dotted path, JSON value)")
    p.add_argument("--seed", type=int, help="root seed; all stage seeds derive from it")
    p.add_argument("--out", help="output directory (config key out_dir)")
    if with_variant:
        p.add_argument("--variant", help="ablation variant: " + ", ".join(VARIANT_NAMES))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mllgraph",
        description="Dependency-aware multi-label classification experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark corpus")
    _add_config_flags(p, with_variant=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one variant and write its artifacts")
    _add_config_flags(p, with_variant=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="JSONL dataset path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--sp-mode", dest="sp_mode", default="exact")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export checkpoint tensors as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--what", required=True,
                   choices=("embeddings", "correlation", "clusters", "projection"))
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("metrics-oracle", help="recheck a metrics report against score CSVs")
    p.add_argument("--scores", required=True, help="scores CSV written by train/eval")
    p.add_argument("--report", required=True, help="metrics JSON to verify")
    p.add_argument("--vocabulary", help="vocabulary JSON (enables the SP_ACC check)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_metrics_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, CheckpointError, TrainingDivergedError, GloveDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
