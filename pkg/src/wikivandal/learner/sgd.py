"""Online hinge-loss SGD over hashed feature bags.

L1 regularization uses cumulative-penalty clipping: the total penalty
``u`` every weight should have received so far is tracked globally, and a
weight is clipped towards zero by what it still owes only when its feature
shows up. With ``c`` set, the per-example penalty is
``1 / (c * n)`` so that a full epoch matches ``|w|_1 + c * sum hinge``.
"""

from __future__ import annotations

from collections.abc import Sequence
from datetime import datetime
from typing import Iterable, Optional

import numpy as np

from ..errors import EmptyStream
from ..vectorizer import check_bits, hash_vectorize
from .model import LinearModel, Loss


def _clip(value, owed, applied):
    """Shrink ``value`` toward zero by ``owed`` minus what it already paid."""
    if value > 0:
        return max(0.0, value - (owed + applied))
    if value < 0:
        return min(0.0, value + (owed - applied))
    return value


def train_sgd_online(
    record_stream: Iterable,
    bits: int,
    learning_rate: tuple[float, float] = (0.1, 1e-4),
    epochs: int = 1,
    seed: int = 0,
    c: Optional[float] = None,
    n_examples: Optional[int] = None,
    average: bool = False,
    trained_at: Optional[datetime] = None,
) -> LinearModel:
    """Train on a stream of ``(FeatureBag, label)`` pairs.

    Step size is ``eta0 / (1 + decay * t)`` with ``t`` counting updates over
    all epochs. Sequences are reshuffled each epoch with ``seed``; a one-shot
    iterator can only be used for a single epoch. With ``average`` the
    returned weights are the mean iterate of the final epoch.
    """
    bits = check_bits(bits)
    eta0, decay = learning_rate
    if eta0 < 0 or decay < 0:
        raise ValueError("learning rate parameters must be non-negative")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    one_shot = iter(record_stream) is record_stream
    if one_shot and epochs > 1:
        raise ValueError("a one-shot iterator cannot be replayed for several epochs")
    if c is not None:
        if not c > 0:
            raise ValueError(f"c must be positive, got {c}")
        if n_examples is None:
            if not hasattr(record_stream, "__len__"):
                raise ValueError("n_examples is required with c for streams of unknown length")
            n_examples = len(record_stream)
        lam = 1.0 / (c * max(int(n_examples), 1))
    else:
        lam = 0.0

    dim = 1 << bits
    w = np.zeros(dim)
    applied = np.zeros(dim) if lam else None
    bias, bias_applied = 0.0, 0.0
    owed = 0.0
    rng = np.random.default_rng(seed)
    t = 0

    for epoch in range(epochs):
        last = epoch == epochs - 1
        if average and last:
            acc = np.zeros(dim)
            stamp = np.zeros(dim, dtype=np.int64)
            bias_acc, bias_stamp = 0.0, 0
            t_start = t
        if isinstance(record_stream, Sequence):
            stream = (record_stream[i] for i in rng.permutation(len(record_stream)))
        else:
            stream = record_stream
        seen = 0
        for bag, label in stream:
            seen += 1
            idx = hash_vectorize(bag, bits).indices
            if average and last:
                acc[idx] += w[idx] * (t - stamp[idx])
                stamp[idx] = t
                bias_acc += bias * (t - bias_stamp)
                bias_stamp = t
            yv = 1.0 if label else -1.0
            eta = eta0 / (1.0 + decay * t)
            if yv * (w[idx].sum() + bias) < 1.0:
                w[idx] += eta * yv
                bias += eta * yv
            if lam:
                owed += eta * lam
                for j in idx:
                    before = w[j]
                    w[j] = _clip(before, owed, applied[j])
                    applied[j] += w[j] - before
                before = bias
                bias = _clip(before, owed, bias_applied)
                bias_applied += bias - before
            t += 1
        if seen == 0:
            raise EmptyStream("no examples in the training stream")

    if lam:
        # settle the penalty still owed by weights whose features went quiet
        pos, neg = w > 0, w < 0
        w[pos] = np.maximum(0.0, w[pos] - (owed + applied[pos]))
        w[neg] = np.minimum(0.0, w[neg] + (owed - applied[neg]))
        bias = _clip(bias, owed, bias_applied)
    if average:
        steps = t - t_start
        acc += w * (t - stamp)
        bias_acc += bias * (t - bias_stamp)
        w = acc / steps
        bias = bias_acc / steps

    kwargs = {} if trained_at is None else {"trained_at": trained_at}
    return LinearModel(weights=w, c=c if c is not None else 1.0, loss=Loss.HINGE, bits=bits, bias=bias, **kwargs)
