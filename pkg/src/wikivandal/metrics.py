"""Ranking and threshold metrics, plus the chronological train/valid/test split."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .corpus import RevisionRecord, parse_timestamp
from .errors import NoPositives, SingleClassData


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    return s, y


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability that a random positive outscores a random negative.

    Computed from midranks (Mann-Whitney U), so tied pairs count 1/2.
    """
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassData("ROC AUC needs at least one positive and one negative")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # midrank of each tie group (1-based ranks)
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    midranks = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(midranks, ends - starts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Average precision: sum of (R_k - R_{k-1}) * P_k over a descending sweep.

    Each group of tied scores is one step of the staircase.
    """
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("PR AUC needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    sorted_s, sorted_y = s[order], y[order]
    last_of_group = np.r_[sorted_s[1:] != sorted_s[:-1], True]
    tp = np.cumsum(sorted_y)[last_of_group]
    seen = np.flatnonzero(last_of_group) + 1
    precision = tp / seen
    recall = tp / n_pos
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))


@dataclass(frozen=True)
class EvalReport:
    roc_auc: float
    pr_auc: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    positives: int
    negatives: int
    threshold: float

    @staticmethod
    def csv_header() -> str:
        return ",".join(f.name for f in fields(EvalReport))

    def to_csv_line(self) -> str:
        return ",".join(_fmt(v) for v in astuple(self))

    def to_text(self) -> str:
        width = max(len(f.name) for f in fields(self))
        return "\n".join(f"{f.name:<{width}}  {_fmt(getattr(self, f.name))}" for f in fields(self))


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(value)
    return f"{value:.6f}"


def threshold_metrics(scores: Sequence[float], labels: Sequence[bool], threshold: float = 0.0) -> dict:
    """Confusion-matrix metrics for ``prediction = score > threshold``."""
    s, y = _arrays(scores, labels)
    if s.size == 0:
        raise ValueError("threshold metrics need at least one example")
    pred = s > threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / s.size,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "positives": tp + fn,
        "negatives": fp + tn,
        "threshold": float(threshold),
    }


def evaluate(scores: Sequence[float], labels: Sequence[bool], threshold: float = 0.0) -> EvalReport:
    return EvalReport(roc_auc=roc_auc(scores, labels), pr_auc=pr_auc(scores, labels),
                      **threshold_metrics(scores, labels, threshold))


@dataclass(frozen=True)
class SplitSpec:
    """Half-open boundaries: train < train_end <= valid < valid_end <= test."""

    train_end: datetime
    valid_end: datetime

    def __post_init__(self):
        for name in ("train_end", "valid_end"):
            value = getattr(self, name)
            if isinstance(value, str):
                object.__setattr__(self, name, parse_timestamp(value))
        if not self.train_end < self.valid_end:
            raise ValueError("train_end must be earlier than valid_end")

    def slot(self, ts: datetime) -> int:
        if ts < self.train_end:
            return 0
        return 1 if ts < self.valid_end else 2


# training ran through 2015, validation Jan-Feb 2016, test Mar-Apr 2016
DEFAULT_SPLIT = SplitSpec("2016-01-01", "2016-03-01")


def time_split(records: Iterable[RevisionRecord], spec: SplitSpec = DEFAULT_SPLIT):
    parts: tuple[list, list, list] = ([], [], [])
    for r in records:
        parts[spec.slot(r.timestamp)].append(r)
    return parts


def fraction_split_spec(timestamps: Sequence[datetime], train: float = 0.8, valid: float = 0.1) -> SplitSpec:
    """Boundaries putting roughly the given fractions of timestamps in train and valid."""
    ts = sorted(timestamps)
    if len(ts) < 3:
        raise ValueError("need at least three timestamps to split")
    a = ts[min(len(ts) - 2, int(round(train * len(ts))))]
    b = ts[min(len(ts) - 1, int(round((train + valid) * len(ts))))]
    if not a < b:
        raise ValueError("timestamps too coarse for the requested fractions")
    return SplitSpec(a, b)
