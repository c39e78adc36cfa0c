"""Two-level stacking: per-family SVMs feed an L2 logistic regression.

Meta-features for the second level are produced out-of-fold: each training
example is scored by base models that never saw it. In-fold scores would
let the stacker memorize the rare positives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import SingleClassData
from .dataset import Dataset
from .l1svm import TrainConfig, train_l1svm
from .model import LinearModel, Loss, predict_matrix


def logistic_objective(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Value and gradient of ``l2/2 |w|^2 + sum log(1 + exp(-y X w))``; ``y`` in {-1, +1}."""
    margin = y * (X @ w)
    value = 0.5 * l2 * np.dot(w, w) + np.logaddexp(0.0, -margin).sum()
    # d/dm log(1 + e^-m) = -sigmoid(-m)
    coef = -y * _sigmoid(-margin)
    return float(value), l2 * w + X.T @ coef


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def train_stacker(
    meta_features,
    labels,
    l2_strength: float = 1.0,
    fit_intercept: bool = True,
    max_iter: int = 100,
    trained_at: Optional[datetime] = None,
) -> LinearModel:
    """Fit the L2 logistic stacker by damped Newton iterations.

    The appended intercept column is penalized like any other weight.
    """
    X = np.asarray(meta_features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels, dtype=bool)
    if labels.size == 0 or labels.all() or not labels.any():
        raise SingleClassData("stacker needs both classes")
    if not l2_strength > 0:
        raise ValueError("l2_strength must be positive")
    if fit_intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    y = np.where(labels, 1.0, -1.0)
    w = np.zeros(X.shape[1])
    f, g = logistic_objective(w, X, y, l2_strength)
    for _ in range(max_iter):
        p = _sigmoid(X @ w)
        hess = (X.T * (p * (1.0 - p))) @ X + l2_strength * np.eye(X.shape[1])
        step = np.linalg.solve(hess, -g)
        decrement = -np.dot(g, step)
        if decrement / 2.0 <= 1e-14 * max(1.0, abs(f)):
            break
        t = 1.0
        while True:
            f_new, g_new = logistic_objective(w + t * step, X, y, l2_strength)
            if f_new <= f - 0.25 * t * decrement or t < 1e-10:
                break
            t *= 0.5
        w = w + t * step
        f, g = f_new, g_new
    weights = w[:-1] if fit_intercept else w
    bias = float(w[-1]) if fit_intercept else 0.0
    kwargs = {} if trained_at is None else {"trained_at": trained_at}
    return LinearModel(weights=weights, c=1.0 / l2_strength, loss=Loss.LOGISTIC, bias=bias, **kwargs)


def stratified_folds(labels, n_folds: int = 2, seed: int = 0) -> list[np.ndarray]:
    """Shuffled fold indices with each class spread evenly over the folds."""
    labels = np.asarray(labels, dtype=bool)
    rng = np.random.default_rng(seed)
    folds: list[list[np.ndarray]] = [[] for _ in range(n_folds)]
    for cls in (True, False):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        for k in range(n_folds):
            folds[k].append(idx[k::n_folds])
    return [np.sort(np.concatenate(parts)) for parts in folds]


def out_of_fold_scores(
    family_data: Sequence[Dataset],
    configs: Sequence[TrainConfig],
    n_folds: int = 2,
    seed: int = 0,
) -> np.ndarray:
    """``(n, n_families)`` matrix of scores from models that did not see the row."""
    y = family_data[0].y
    n = len(y)
    out = np.zeros((n, len(family_data)))
    for fold in stratified_folds(y, n_folds, seed):
        train_idx = np.setdiff1d(np.arange(n), fold, assume_unique=True)
        for k, (data, cfg) in enumerate(zip(family_data, configs)):
            model = train_l1svm(data.take(train_idx), cfg)
            out[fold, k] = predict_matrix(model, data.X[fold])
    return out


@dataclass(frozen=True, eq=False)
class StackedEnsemble:
    base: tuple[LinearModel, ...]
    stacker: LinearModel

    def meta_features(self, family_X: Sequence[sp.spmatrix]) -> np.ndarray:
        return np.column_stack([predict_matrix(m, X) for m, X in zip(self.base, family_X)])

    def score(self, family_X: Sequence[sp.spmatrix]) -> np.ndarray:
        return predict_matrix(self.stacker, sp.csr_matrix(self.meta_features(family_X)))


def fit_stack(
    family_data: Sequence[Dataset],
    configs: Sequence[TrainConfig],
    l2_strength: float = 1.0,
    n_folds: int = 2,
    seed: int = 0,
    trained_at: Optional[datetime] = None,
) -> tuple[StackedEnsemble, np.ndarray]:
    """Train the stacker on out-of-fold scores, then refit the base models on all rows.

    Returns the ensemble and the out-of-fold meta-feature matrix.
    """
    if len(family_data) != len(configs):
        raise ValueError("one TrainConfig per family is required")
    configs = [replace(cfg, seed=seed) for cfg in configs]
    meta = out_of_fold_scores(family_data, configs, n_folds, seed)
    stacker = train_stacker(meta, family_data[0].y, l2_strength, trained_at=trained_at)
    base = tuple(train_l1svm(d, cfg, trained_at=trained_at) for d, cfg in zip(family_data, configs))
    return StackedEnsemble(base, stacker), meta
