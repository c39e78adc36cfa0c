"""Choose the SVM regularization trade-off C by validation ROC AUC."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from ..errors import DataError, VandalError
from ..metrics import roc_auc
from .dataset import Dataset
from .l1svm import TrainConfig, train_l1svm
from .model import predict_matrix

log = logging.getLogger(__name__)

DEFAULT_CANDIDATES = (1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0, 10.0)


@dataclass(frozen=True)
class GridRow:
    c: float
    auc: Optional[float]
    wall_time: float
    nnz: int = 0
    error: Optional[str] = None


def _run(train: Dataset, valid: Dataset, config: TrainConfig):
    start = time.perf_counter()
    try:
        model = train_l1svm(train, config)
        auc = roc_auc(predict_matrix(model, valid.X), valid.y)
    except VandalError as exc:
        log.warning("C=%g failed: %s", config.c, exc)
        return GridRow(config.c, None, time.perf_counter() - start, 0, str(exc))
    return GridRow(config.c, auc, time.perf_counter() - start, model.nnz)


def grid_search_c(
    train: Dataset,
    valid: Dataset,
    candidates: Sequence[float] = DEFAULT_CANDIDATES,
    config: TrainConfig = TrainConfig(),
    workers: int = 1,
) -> tuple[float, list[GridRow]]:
    """Train one model per candidate C and keep the best validation AUC.

    Ties go to the smaller C. A candidate whose training or scoring fails is
    reported with ``auc=None`` and skipped. Rows come back in candidate order.
    """
    if not candidates:
        raise ValueError("at least one candidate C is required")
    if train.dim != valid.dim:
        raise DataError(f"train dim {train.dim} != valid dim {valid.dim}")
    configs = [replace(config, c=float(c)) for c in candidates]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda cfg: _run(train, valid, cfg), configs))
    else:
        results = [_run(train, valid, cfg) for cfg in configs]
    best = None
    for row in results:
        if row.auc is None:
            continue
        if best is None or row.auc > best.auc or (row.auc == best.auc and row.c < best.c):
            best = row
    if best is None:
        raise DataError("every candidate C failed")
    return best.c, results
