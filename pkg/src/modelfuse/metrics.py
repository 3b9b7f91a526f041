"""Exact ROC curves and AUROC, per label and macro-averaged.

AUROC uses the rank-statistic (Mann-Whitney) form: with R the sum of average
ranks of the positive scores over the pooled sample,

    AUROC = (R - P(P+1)/2) / (P * N_neg)

Ties get the average rank of their block, equivalent to counting tied
positive-negative pairs at 0.5. This is exact and O(N log N); no thresholds
are sampled anywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import GroundTruth, LabelSpace, PredictionMatrix
from .errors import ComputationError, InputError, UndefinedAurocError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2.0 fallback


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied blocks assigned their mean rank."""
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    n = len(values)
    # boundaries of equal-value runs in the sorted array
    edges = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1], True])
    mean_rank = 0.5 * (edges[:-1] + edges[1:] + 1)  # run [b, e) -> (b+1 + e)/2
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(mean_rank, np.diff(edges))
    return ranks


def _check_instance(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1 or len(scores) != len(labels):
        raise InputError("scores and labels must be 1-D and the same length")
    if len(scores) < 1:
        raise InputError("need at least one sample")
    if not np.isfinite(scores).all():
        raise InputError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be binary 0/1")
    labels = labels.astype(np.int8)
    positives = int(labels.sum())
    if positives == 0 or positives == len(labels):
        present = int(labels[0])
        raise UndefinedAurocError(
            f"AUROC undefined: only class {present} present", present_class=present
        )
    return scores, labels


def auroc(scores, labels) -> float:
    """Rank-based AUROC of binary ``labels`` under ``scores``."""
    scores, labels = _check_instance(scores, labels)
    n = len(labels)
    p = int(labels.sum())
    n_neg = n - p
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - p * (p + 1) / 2.0
    return float(u / (p * n_neg))


@dataclass(frozen=True)
class RocCurve:
    """ROC points, one per distinct threshold plus the (0, 0) sentinel."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> tuple[tuple[float, float, float], ...]:
        return tuple(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def area(self) -> float:
        """Trapezoidal area under the curve; equals the rank-based AUROC."""
        return float(_trapezoid(self.tpr, self.fpr))


def roc_curve(scores, labels) -> RocCurve:
    """Exact ROC curve from (0, 0) to (1, 1), descending thresholds."""
    scores, labels = _check_instance(scores, labels)
    p = int(labels.sum())
    n_neg = len(labels) - p

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # last index of each equal-score run; one ROC point per distinct threshold
    block_ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[block_ends]
    fp = (block_ends + 1) - tp
    fpr = np.concatenate(([0.0], fp / n_neg))
    tpr = np.concatenate(([0.0], tp / p))
    thresholds = np.concatenate(([np.inf], s[block_ends]))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


@dataclass(frozen=True)
class AurocReport:
    """Per-label AUROC plus the macro mean over defined labels."""

    per_label: dict[str, float | None]
    macro_mean: float
    skipped_labels: tuple[str, ...]


def macro_auroc(
    predictions: PredictionMatrix, truth: GroundTruth, label_space: LabelSpace
) -> AurocReport:
    """Per-label AUROC and macro mean; single-class labels are skipped.

    Skipped labels appear in the report with value None and are excluded from
    the macro mean. Raises if no label has both classes.
    """
    if predictions.sample_ids != truth.sample_ids:
        raise InputError("predictions and truth are not aligned (sample order differs)")
    if predictions.n_labels != len(label_space) or truth.n_labels != len(label_space):
        raise InputError("column count does not match label space")

    per_label: dict[str, float | None] = {}
    skipped: list[str] = []
    defined: list[float] = []
    for j, name in enumerate(label_space.names):
        try:
            value = auroc(predictions.probabilities[:, j], truth.labels[:, j])
        except UndefinedAurocError:
            per_label[name] = None
            skipped.append(name)
            continue
        per_label[name] = value
        defined.append(value)
    if not defined:
        raise ComputationError(
            "macro AUROC undefined: every label has a single class"
        )
    return AurocReport(
        per_label=per_label,
        macro_mean=float(np.mean(defined)),
        skipped_labels=tuple(skipped),
    )


# ---------------------------------------------------------------------------
# report / export files


def write_auroc_report(report: AurocReport, path) -> None:
    """Key-value report: one ``label value`` line per label, then macro_mean."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for name, value in report.per_label.items():
            fh.write(f"{name} {'NA' if value is None else repr(value)}\n")
        fh.write(f"macro_mean {repr(report.macro_mean)}\n")
        if report.skipped_labels:
            fh.write(f"skipped_labels {','.join(report.skipped_labels)}\n")


def write_roc_points(curve: RocCurve, path) -> None:
    """Per-label ROC export: ``fpr,tpr,threshold`` rows for re-plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for f, t, th in zip(curve.fpr, curve.tpr, curve.thresholds):
            writer.writerow([repr(float(f)), repr(float(t)), repr(float(th))])
