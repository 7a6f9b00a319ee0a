"""Multi-label evaluation: micro/macro P/R/F1, Hamming loss, exact match, mAP."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics

METRIC_KEYS = ("SP_ACC", "MLL_ACC", "mAP", "HL", "OP", "OR", "OF1", "CP", "CR", "CF1")


@dataclass(frozen=True)
class ScoreTable:
    """Per-sample class scores in [0, 1] with 0/1 targets and a decision threshold."""

    scores: np.ndarray
    targets: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.uint8)
        if s.ndim != 2 or s.shape != y.shape:
            raise ValueError(f"scores {s.shape} and targets {np.shape(self.targets)} must match as (n, C)")
        if s.shape[0] < 1:
            raise ValueError("score table must hold at least one sample")
        if not np.all(np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
            raise ValueError("scores must lie within [0, 1]")
        raw = np.asarray(self.targets)
        if not np.all((raw == 0) | (raw == 1)):
            raise ValueError("targets must be 0/1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie within [0, 1]")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def n_classes(self) -> int:
        return self.scores.shape[1]


def binarize(table: ScoreTable) -> np.ndarray:
    """Strict threshold: a score equal to the threshold predicts negative."""
    return (table.scores > table.threshold).astype(np.uint8)


def _safe_ratio(num: float, den: float, event: str) -> float:
    if den == 0:
        diagnostics.record(event)
        return 0.0
    return num / den


def overall_and_perclass(table: ScoreTable):
    """(OP, OR, OF1, CP, CR, CF1); every 0/0 is defined as 0 and counted."""
    pred = binarize(table).astype(bool)
    tgt = table.targets.astype(bool)
    tp = (pred & tgt).sum(axis=0).astype(np.float64)
    fp = (pred & ~tgt).sum(axis=0).astype(np.float64)
    fn = (~pred & tgt).sum(axis=0).astype(np.float64)
    op = _safe_ratio(tp.sum(), tp.sum() + fp.sum(), "overall_precision_zero_division")
    orec = _safe_ratio(tp.sum(), tp.sum() + fn.sum(), "overall_recall_zero_division")
    of1 = _safe_ratio(2.0 * op * orec, op + orec, "overall_f1_zero_division")
    cp = float(
        np.mean([_safe_ratio(tp[c], tp[c] + fp[c], "perclass_precision_zero_division") for c in range(len(tp))])
    )
    cr = float(
        np.mean([_safe_ratio(tp[c], tp[c] + fn[c], "perclass_recall_zero_division") for c in range(len(tp))])
    )
    cf1 = _safe_ratio(2.0 * cp * cr, cp + cr, "perclass_f1_zero_division")
    return float(op), float(orec), float(of1), float(cp), float(cr), cf1


def hamming_loss(table: ScoreTable) -> float:
    pred = binarize(table)
    return float(np.mean(pred != table.targets))


def exact_match(table: ScoreTable, restrict=None) -> float:
    """Fraction of samples whose binarized prediction matches every target bit.

    restrict limits the comparison to the given class indices (used for the
    plane-only accuracy); it must be nonempty when provided.
    """
    pred = binarize(table)
    tgt = table.targets
    if restrict is not None:
        idx = np.asarray(restrict, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("restrict must name at least one class")
        pred = pred[:, idx]
        tgt = tgt[:, idx]
    return float(np.mean(np.all(pred == tgt, axis=1)))


def sp_argmax_accuracy(table: ScoreTable, sp_indices) -> float:
    """Alternative plane accuracy: top-scoring plane must be a true plane bit.

    Samples without any positive plane bit count as correct only when the
    binarized plane predictions are all zero.
    """
    idx = np.asarray(sp_indices, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("sp_indices must name at least one class")
    scores = table.scores[:, idx]
    targets = table.targets[:, idx]
    preds = binarize(table)[:, idx]
    correct = 0
    for i in range(table.n):
        if targets[i].sum() == 0:
            correct += int(preds[i].sum() == 0)
        else:
            correct += int(targets[i, int(np.argmax(scores[i]))] == 1)
    return correct / table.n


def average_precision(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean of precision@k over the positive ranks.

    Ranking is by descending score; ties keep ascending original index.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(targets)
    if s.ndim != 1 or s.shape != t.shape:
        raise ValueError("scores and targets must be matching vectors")
    if int(t.sum()) == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = t[order].astype(np.float64)
    ranks = np.flatnonzero(hits) + 1
    return float((np.cumsum(hits)[ranks - 1] / ranks).mean())


def mean_average_precision(table: ScoreTable):
    """(mAP, per-class AP with NaN for skipped classes without positives)."""
    C = table.n_classes
    per_class = np.full(C, np.nan)
    vals = []
    for c in range(C):
        if int(table.targets[:, c].sum()) == 0:
            diagnostics.record("map_class_without_positives")
            continue
        per_class[c] = average_precision(table.scores[:, c], table.targets[:, c])
        vals.append(per_class[c])
    if not vals:
        diagnostics.record("map_no_scorable_classes")
        return 0.0, per_class
    return float(np.mean(vals)), per_class


@dataclass(frozen=True)
class MetricsReport:
    sp_acc: float
    mll_acc: float
    map: float
    hl: float
    op: float
    orec: float
    of1: float
    cp: float
    cr: float
    cf1: float
    per_class_ap: np.ndarray

    def as_dict(self) -> dict:
        vals = (self.sp_acc, self.mll_acc, self.map, self.hl, self.op,
                self.orec, self.of1, self.cp, self.cr, self.cf1)
        return dict(zip(METRIC_KEYS, (float(v) for v in vals)))


def compute_report(table: ScoreTable, sp_indices, sp_mode: str = "exact") -> MetricsReport:
    """All Table-style metrics in one pass over a score table."""
    if sp_mode not in ("exact", "argmax"):
        raise ValueError(f"unknown sp_mode: {sp_mode!r}")
    if sp_mode == "exact":
        sp_acc = exact_match(table, restrict=sp_indices)
    else:
        sp_acc = sp_argmax_accuracy(table, sp_indices)
    mll_acc = exact_match(table)
    mp, per_class = mean_average_precision(table)
    op, orec, of1, cp, cr, cf1 = overall_and_perclass(table)
    return MetricsReport(
        sp_acc=sp_acc, mll_acc=mll_acc, map=mp, hl=hamming_loss(table),
        op=op, orec=orec, of1=of1, cp=cp, cr=cr, cf1=cf1, per_class_ap=per_class,
    )


def format_report_json(report: MetricsReport) -> str:
    """Percentages rounded to two decimals, keys in canonical order."""
    scaled = {k: round(v * 100.0, 2) for k, v in report.as_dict().items()}
    return json.dumps(scaled, indent=2) + "\n"


def format_report_csv(report: MetricsReport) -> str:
    scaled = {k: round(v * 100.0, 2) for k, v in report.as_dict().items()}
    head = ",".join(METRIC_KEYS)
    row = ",".join(repr(scaled[k]) for k in METRIC_KEYS)
    return head + "\n" + row + "\n"


def write_score_csv(path, table: ScoreTable, ids, names) -> None:
    """Scores plus targets, one sample per row; re-read by read_score_csv."""
    if len(ids) != table.n or len(names) != table.n_classes:
        raise ValueError("ids/names do not match the score table")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(names) + "," + ",".join(f"target:{n}" for n in names) + "\n")
        for i in range(table.n):
            srow = ",".join(repr(float(v)) for v in table.scores[i])
            trow = ",".join(str(int(v)) for v in table.targets[i])
            fh.write(f"{ids[i]},{srow},{trow}\n")


def read_score_csv(path, threshold: float = 0.5):
    """Returns (ids, names, ScoreTable) from write_score_csv output."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError("empty score file")
    header = lines[0].split(",")
    try:
        first_target = next(i for i, h in enumerate(header) if h.startswith("target:"))
    except StopIteration:
        raise ValueError("score file lacks target columns") from None
    names = header[1:first_target]
    ids = []
    scores = []
    targets = []
    for line in lines[1:]:
        parts = line.split(",")
        ids.append(parts[0])
        scores.append([float(v) for v in parts[1:first_target]])
        targets.append([int(v) for v in parts[first_target:]])
    table = ScoreTable(np.asarray(scores), np.asarray(targets), threshold)
    return ids, names, table
