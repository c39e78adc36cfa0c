"""L1-regularized squared-hinge linear SVM.

Minimizes ``|w|_1 + |b| + C * sum_i max(0, 1 - y_i (w.x_i + b))**2``.

Two solvers share the problem setup:

``owlqn`` (default)
    Orthant-wise limited-memory quasi-Newton (OWL-QN). Copes
    with the near-collinear columns typical of one-hot data (the intercept
    against very frequent tokens), where coordinate descent crawls.
``cd``
    One-variable Newton steps with Armijo line search, as in LIBLINEAR's
    primal L1 solver, over a seeded permutation of the columns each epoch.

Both only accept steps that lower the objective, so the recorded history is
non-increasing. Empty columns are dropped and the rest are laid out in a
*content-defined* order (sorted by row pattern), never by column index, so
two matrices that differ only by a column permutation, such as hashed and
dictionary encodings of an injective vocabulary, follow the same trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numba
import numpy as np
import scipy.sparse as sp

from ..errors import SingleClassData
from .dataset import Dataset
from .model import LinearModel, Loss

log = logging.getLogger(__name__)

_SIGMA = 0.01
_BETA = 0.5
_MAX_LINE_SEARCH = 30


@dataclass(frozen=True)
class TrainConfig:
    c: float = 0.5
    max_epochs: int = 1000
    tol: float = 1e-9
    seed: int = 0
    fit_intercept: bool = True
    solver: str = "owlqn"
    memory: int = 10

    def __post_init__(self):
        if self.solver not in ("owlqn", "cd"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@numba.njit(cache=True, nogil=True)
def _cd_epoch(indptr, indices, data, y, w, slack, c, order):
    for j in order:
        lo = indptr[j]
        hi = indptr[j + 1]
        g = 0.0
        h = 0.0
        for p in range(lo, hi):
            i = indices[p]
            if slack[i] > 0.0:
                v = data[p]
                g -= y[i] * v * slack[i]
                h += v * v
        g *= 2.0 * c
        h *= 2.0 * c
        if h < 1e-12:
            h = 1e-12
        wj = w[j]
        if g + 1.0 < h * wj:
            d = -(g + 1.0) / h
        elif g - 1.0 > h * wj:
            d = -(g - 1.0) / h
        else:
            d = -wj
        if abs(d) < 1e-12:
            continue
        delta = g * d + abs(wj + d) - abs(wj)
        step = 1.0
        for _ in range(_MAX_LINE_SEARCH):
            dd = step * d
            loss_diff = 0.0
            for p in range(lo, hi):
                i = indices[p]
                old = slack[i]
                new = old - dd * y[i] * data[p]
                if new > 0.0:
                    loss_diff += new * new
                if old > 0.0:
                    loss_diff -= old * old
            if abs(wj + dd) - abs(wj) + c * loss_diff <= _SIGMA * step * delta:
                w[j] = wj + dd
                for p in range(lo, hi):
                    i = indices[p]
                    slack[i] -= dd * y[i] * data[p]
                break
            step *= _BETA


def l1svm_objective(X, labels, weights, bias: float, c: float) -> float:
    y = np.where(np.asarray(labels, dtype=bool), 1.0, -1.0)
    z = np.asarray(X @ np.asarray(weights, dtype=np.float64)).ravel() + bias
    slack = np.maximum(0.0, 1.0 - y * z)
    return float(np.abs(weights).sum() + abs(bias) + c * np.dot(slack, slack))


def _canonical_columns(csc: sp.csc_matrix) -> np.ndarray:
    """Non-empty columns ordered by (row count, row pattern, values)."""
    counts = np.diff(csc.indptr)
    cols = np.flatnonzero(counts)
    ip, ix, dv = csc.indptr, csc.indices, csc.data

    def key(j):
        lo, hi = ip[j], ip[j + 1]
        return (hi - lo, ix[lo:hi].astype("<i8").tobytes(), dv[lo:hi].astype("<f8").tobytes())

    return np.array(sorted(cols.tolist(), key=key), dtype=np.int64)


def train_l1svm(dataset: Dataset, config: TrainConfig = TrainConfig(), trained_at: Optional[datetime] = None) -> LinearModel:
    """Fit the L1-regularized squared-hinge SVM; deterministic for a given config."""
    n = len(dataset)
    if n == 0 or dataset.n_positive == 0 or dataset.n_negative == 0:
        raise SingleClassData(f"need both classes, got {dataset.n_positive} positive / {dataset.n_negative} negative")
    y = np.where(dataset.y, 1.0, -1.0)
    c = float(config.c)

    csc = sp.csc_matrix(dataset.X, dtype=np.float64)
    csc.sort_indices()
    cols = _canonical_columns(csc)
    sub = csc[:, cols] if cols.size else sp.csc_matrix((n, 0))
    if config.fit_intercept:
        sub = sp.hstack([sub, sp.csc_matrix(np.ones((n, 1)))], format="csc")
    sub.sort_indices()
    k = sub.shape[1]

    if config.solver == "cd":
        w, history = _solve_cd(sub, y, c, config)
    else:
        w, history = _solve_owlqn(sub, y, c, config)
    log.debug("l1svm C=%g %s: %d iterations, objective %.10g", c, config.solver, len(history), history[-1])

    full = np.zeros(dataset.dim)
    n_feat = k - 1 if config.fit_intercept else k
    full[cols] = w[:n_feat]
    bias = float(w[-1]) if config.fit_intercept else 0.0
    kwargs = {} if trained_at is None else {"trained_at": trained_at}
    return LinearModel(weights=full, c=c, loss=Loss.SQUARED_HINGE, bits=dataset.bits, bias=bias,
                       history=tuple(history), **kwargs)


def _solve_cd(A: sp.csc_matrix, y: np.ndarray, c: float, config: TrainConfig):
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    data = A.data.astype(np.float64)
    k = A.shape[1]
    w = np.zeros(k)
    slack = np.ones(A.shape[0])
    rng = np.random.default_rng(config.seed)

    def objective():
        s = np.maximum(slack, 0.0)
        return float(np.abs(w).sum() + c * np.dot(s, s))

    prev = objective()
    history = [prev]
    for _ in range(config.max_epochs):
        _cd_epoch(indptr, indices, data, y, w, slack, c, rng.permutation(k))
        f = objective()
        history.append(f)
        if prev - f <= config.tol * prev:
            break
        prev = f
    return w, history


def _pseudo_gradient(w, g):
    """Minimum-norm subgradient of ``f(w) + |w|_1`` given the smooth gradient ``g``."""
    pg = np.where(w > 0, g + 1.0, np.where(w < 0, g - 1.0, 0.0))
    at_zero = w == 0
    right = at_zero & (g + 1.0 < 0)
    left = at_zero & (g - 1.0 > 0)
    pg[right] = g[right] + 1.0
    pg[left] = g[left] - 1.0
    return pg


def _solve_owlqn(A: sp.csc_matrix, y: np.ndarray, c: float, config: TrainConfig):
    AT = A.T.tocsr()

    def smooth(w):
        slack = np.maximum(0.0, 1.0 - y * (A @ w))
        return c * np.dot(slack, slack), -2.0 * c * (AT @ (y * slack))

    w = np.zeros(A.shape[1])
    f, g = smooth(w)
    F = f
    history = [F]
    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    for _ in range(config.max_epochs):
        pg = _pseudo_gradient(w, g)
        # two-loop recursion on the smooth part's curvature pairs
        q = -pg
        alphas = []
        for s_, y_, rho in reversed(pairs):
            a = rho * np.dot(s_, q)
            alphas.append(a)
            q = q - a * y_
        if pairs:
            s_, y_, _ = pairs[-1]
            q = q * (np.dot(s_, y_) / np.dot(y_, y_))
        for (s_, y_, rho), a in zip(pairs, reversed(alphas)):
            q = q + (a - rho * np.dot(y_, q)) * s_
        d = np.where(np.sign(q) == -np.sign(pg), q, 0.0)
        orthant = np.where(w != 0, np.sign(w), -np.sign(pg))
        norm = np.linalg.norm(pg)
        step = 1.0 if pairs or norm == 0 else 1.0 / norm
        while True:
            w_new = w + step * d
            w_new[np.sign(w_new) != orthant] = 0.0
            f_new, g_new = smooth(w_new)
            F_new = f_new + np.abs(w_new).sum()
            if F_new <= F + 1e-4 * np.dot(pg, w_new - w) or step < 1e-20:
                break
            step *= 0.5
        if F_new > F:
            break
        s_, y_ = w_new - w, g_new - g
        sy = np.dot(s_, y_)
        if sy > 1e-16:
            pairs.append((s_, y_, 1.0 / sy))
            if len(pairs) > config.memory:
                pairs.pop(0)
        converged = F - F_new <= config.tol * F
        w, g, F = w_new, g_new, F_new
        history.append(F)
        if converged:
            break
    return w, history
