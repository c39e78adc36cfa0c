"""Labeled sparse datasets and class-rebalancing resamplers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionMismatch, NoNegatives, NoPositives
from ..vectorizer import SparseVector, matrix_row, vectors_to_matrix


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of a CSR matrix with boolean labels (True = rolled back)."""

    X: sp.csr_matrix
    y: np.ndarray
    bits: Optional[int] = None

    def __post_init__(self):
        X = sp.csr_matrix(self.X)
        y = np.asarray(self.y, dtype=bool)
        if y.ndim != 1 or X.shape[0] != y.size:
            raise DimensionMismatch(f"{X.shape[0]} rows but {y.size} labels")
        if not X.has_sorted_indices:
            X = X.sorted_indices()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[SparseVector, bool]], dim: Optional[int] = None, bits=None) -> "Dataset":
        rows = list(rows)
        vectors = [v for v, _ in rows]
        if dim is None:
            if not vectors:
                raise ValueError("dimension needed for an empty dataset")
            dim = vectors[0].dim
        X = vectors_to_matrix(vectors, dim)
        return cls(X, np.array([bool(label) for _, label in rows], dtype=bool), bits)

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def rows(self) -> list[tuple[SparseVector, bool]]:
        return [(matrix_row(self.X, i), bool(self.y[i])) for i in range(len(self))]

    def __len__(self):
        return int(self.y.size)

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def take(self, index: Sequence[int]) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.X[index], self.y[index], self.bits)


def upsample_positives(dataset: Dataset, factor: int, seed: int = 0) -> Dataset:
    """Grow the positive class to ``factor`` times its size.

    Every original positive is kept once; the extra ``(factor - 1) * P``
    copies are drawn from the positives with replacement. The result is
    shuffled with ``seed``.
    """
    if isinstance(factor, bool) or int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    pos = np.flatnonzero(dataset.y)
    if pos.size == 0:
        raise NoPositives("cannot upsample a dataset without positives")
    rng = np.random.default_rng(seed)
    extra = rng.choice(pos, size=(int(factor) - 1) * pos.size, replace=True)
    index = np.concatenate([np.arange(len(dataset)), extra])
    return dataset.take(rng.permutation(index))


def downsample_negatives(dataset: Dataset, keep_rate: float, replacement: bool = False, seed: int = 0) -> Dataset:
    """Keep ``round(keep_rate * N)`` negatives (half rounds up); positives stay."""
    if not 0 < keep_rate <= 1:
        raise ValueError(f"keep_rate must be in (0, 1], got {keep_rate}")
    neg = np.flatnonzero(~dataset.y)
    if neg.size == 0:
        raise NoNegatives("cannot downsample a dataset without negatives")
    k = int(np.floor(keep_rate * neg.size + 0.5))
    rng = np.random.default_rng(seed)
    kept = rng.choice(neg, size=k, replace=bool(replacement))
    index = np.concatenate([np.flatnonzero(dataset.y), kept])
    return dataset.take(rng.permutation(index))
