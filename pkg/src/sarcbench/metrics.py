"""Evaluation metrics: confusion matrices, accuracy, macro-F1, PR curves and the paired bootstrap.

The positive class throughout is ``Label.SARCASTIC``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .corpus import DatasetSplit, Label
from .predictions import EntryStatus, PredictionSet


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix2x2:
    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise MetricsError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def actual_positive(self) -> int:
        return self.tp + self.fn

    @property
    def actual_negative(self) -> int:
        return self.fp + self.tn

    def to_json(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> ConfusionMatrix2x2:
        return cls(int(obj["tp"]), int(obj["fn"]), int(obj["fp"]), int(obj["tn"]))


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall at every distinct score threshold, ordered by ascending recall."""

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]
    auprc: float

    def to_json(self) -> dict:
        return {
            "recall": [p[0] for p in self.points],
            "precision": [p[1] for p in self.points],
            "thresholds": list(self.thresholds),
            "auprc": self.auprc,
        }

    @classmethod
    def from_json(cls, obj: dict) -> PRCurve:
        return cls(tuple(zip(obj["recall"], obj["precision"])), tuple(obj["thresholds"]), obj["auprc"])


@dataclass(frozen=True)
class BootstrapResult:
    n_iterations: int
    resample_size: int
    observed_delta: float
    delta_mean: float
    ci_low: float
    ci_high: float
    significant: bool

    def to_json(self) -> dict:
        return asdict(self)


def _check_ids(preds: PredictionSet, golds: DatasetSplit) -> None:
    pred_ids, gold_ids = set(preds.ids), set(golds.ids)
    if len(pred_ids) != len(preds.entries):
        raise MetricsError(f"prediction set {preds.model_id!r} contains duplicate sentence ids")
    if pred_ids != gold_ids:
        missing = sorted(gold_ids - pred_ids)
        extra = sorted(pred_ids - gold_ids)
        raise MetricsError(f"id mismatch: missing predictions for {missing[:10]}, unknown ids {extra[:10]}")


def correctness(preds: PredictionSet, golds: DatasetSplit, invalid: str = "incorrect") -> np.ndarray:
    """Boolean correctness per gold record (gold order).

    Unparseable or errored predictions count as wrong; with ``invalid="exclude"``
    they are dropped instead.
    """
    _check_ids(preds, golds)
    by_id = {e.sentence_id: e for e in preds.entries}
    out = []
    for rec in golds.records:
        e = by_id[rec.id]
        if e.status is not EntryStatus.OK:
            if invalid == "exclude":
                continue
            out.append(False)
        else:
            out.append(e.predicted is rec.label)
    return np.asarray(out, dtype=bool)


def confusion(preds: PredictionSet, golds: DatasetSplit, invalid: str = "incorrect") -> ConfusionMatrix2x2:
    if invalid not in ("incorrect", "exclude"):
        raise MetricsError(f"unknown invalid-prediction policy {invalid!r}")
    _check_ids(preds, golds)
    by_id = {e.sentence_id: e for e in preds.entries}
    tp = fn = fp = tn = 0
    for rec in golds.records:
        e = by_id[rec.id]
        actual_pos = rec.label is Label.SARCASTIC
        if e.status is not EntryStatus.OK:
            if invalid == "exclude":
                continue
            pred_pos = not actual_pos
        else:
            pred_pos = e.predicted is Label.SARCASTIC
        if actual_pos:
            tp, fn = (tp + 1, fn) if pred_pos else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if pred_pos else (fp, tn + 1)
    return ConfusionMatrix2x2(tp, fn, fp, tn)


def accuracy(cm: ConfusionMatrix2x2) -> float:
    if cm.total == 0:
        raise MetricsError("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.total


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def per_class_scores(cm: ConfusionMatrix2x2) -> dict[str, dict[str, float]]:
    """Precision, recall and F1 for both classes; zero divisions give 0."""

    def prf(tp, fp, fn):
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        return {"precision": p, "recall": r, "f1": _f1(tp, fp, fn)}

    return {
        Label.SARCASTIC.value: prf(cm.tp, cm.fp, cm.fn),
        Label.NON_SARCASTIC.value: prf(cm.tn, cm.fn, cm.fp),
    }


def macro_f1(cm: ConfusionMatrix2x2) -> float:
    if cm.total == 0:
        raise MetricsError("macro-F1 of an empty confusion matrix")
    return (_f1(cm.tp, cm.fp, cm.fn) + _f1(cm.tn, cm.fn, cm.fp)) / 2


def pr_curve(scores: Iterable[tuple[float, Label | bool]], positive: Label = Label.SARCASTIC) -> PRCurve:
    """Sweep every distinct score as a threshold (predict positive when ``score >= t``).

    AUPRC is the step-wise sum ``sum_i (R_i - R_{i-1}) * P_i`` with ``R_0 = 0``,
    accumulated in exact rational arithmetic and rounded once.
    """
    pairs = list(scores)
    s = np.asarray([float(p[0]) for p in pairs], dtype=float)
    y = np.asarray([(p[1] is positive) if isinstance(p[1], Label) else bool(p[1]) for p in pairs], dtype=np.int64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricsError("PR curve needs at least one positive gold label")

    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each tie group in descending score order
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    predicted = ends + 1

    points = []
    area = Fraction(0)
    prev_tp = 0
    for t, k in zip(tp.tolist(), predicted.tolist()):
        area += Fraction(t - prev_tp, n_pos) * Fraction(t, k)
        prev_tp = t
        points.append((t / n_pos, t / k))
    return PRCurve(tuple(points), tuple(s[ends].tolist()), float(area))


def mean_auprc(curves: Sequence[PRCurve]) -> float:
    if not curves:
        raise MetricsError("mean AUPRC of an empty curve list")
    return float(np.mean([c.auprc for c in curves]))


def scores_with_gold(preds: PredictionSet, golds: DatasetSplit) -> list[tuple[float, Label]]:
    _check_ids(preds, golds)
    if not preds.has_scores:
        raise MetricsError(f"prediction set {preds.model_id!r} carries no scores")
    by_id = {e.sentence_id: e.score for e in preds.entries}
    return [(by_id[r.id], r.label) for r in golds.records]


def paired_bootstrap(
    preds_a: PredictionSet,
    preds_b: PredictionSet,
    golds: DatasetSplit,
    n_iterations: int = 2344,
    seed: int = 0,
    resample_size: int | None = None,
) -> BootstrapResult:
    """Paired bootstrap of the accuracy difference A - B over a shared test set.

    Each iteration draws ``resample_size`` (default ``len(golds)``) indices with
    replacement. The interval uses order statistics: the 2.5th percentile rounded
    down and the 97.5th rounded up, which keeps it symmetric under swapping A and B.
    """
    if n_iterations < 1:
        raise MetricsError("n_iterations must be at least 1")
    ca = correctness(preds_a, golds).astype(np.int64)
    cb = correctness(preds_b, golds).astype(np.int64)
    n = len(ca)
    if n == 0:
        raise MetricsError("paired bootstrap over an empty test set")
    m = resample_size or n
    diff = ca - cb
    rng = np.random.default_rng(seed)
    deltas = np.empty(n_iterations, dtype=float)
    chunk = max(1, 2_000_000 // m)
    for start in range(0, n_iterations, chunk):
        stop = min(start + chunk, n_iterations)
        idx = rng.integers(0, n, size=(stop - start, m))
        deltas[start:stop] = diff[idx].sum(axis=1) / m
    lo = float(np.percentile(deltas, 2.5, method="lower"))
    hi = float(np.percentile(deltas, 97.5, method="higher"))
    return BootstrapResult(
        n_iterations=n_iterations,
        resample_size=m,
        observed_delta=float(diff.sum() / n),
        delta_mean=float(deltas.mean()),
        ci_low=lo,
        ci_high=hi,
        significant=bool(lo > 0 or hi < 0),
    )


def summarize(preds: PredictionSet, golds: DatasetSplit, invalid: str = "incorrect") -> dict:
    """Accuracy, macro-F1, confusion counts and (when scores exist) the PR curve."""
    cm = confusion(preds, golds, invalid)
    out = {
        "accuracy": accuracy(cm),
        "macro_f1": macro_f1(cm),
        "confusion": cm.to_json(),
        "per_class": per_class_scores(cm),
        "status_counts": preds.status_counts(),
    }
    if preds.has_scores and any(r.label is Label.SARCASTIC for r in golds.records):
        curve = pr_curve(scores_with_gold(preds, golds))
        out["auprc"] = curve.auprc
        out["pr_curve"] = curve.to_json()
    return out
