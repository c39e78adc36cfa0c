"""Linear model container, scoring and the on-disk model format.

File layout::

    VSVM1\\n
    key=value lines (dim, bits, c, loss, bias, trained_at)
    \\n
    dim little-endian float32 weights

Weights are quantized to float32 on save, so ``load(save(m))`` is a fixed
point: a loaded model saves back to identical bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..corpus import format_timestamp, parse_timestamp
from ..errors import BadModelFile, DimensionMismatch
from ..vectorizer import SparseVector, vectors_to_matrix

MAGIC = b"VSVM1\n"


class Loss(enum.Enum):
    SQUARED_HINGE = "squared_hinge"
    HINGE = "hinge"
    LOGISTIC = "logistic"


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    c: float
    loss: Loss
    bits: Optional[int] = None
    bias: float = 0.0
    trained_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    # objective value after each training epoch; not persisted
    history: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("weights must be finite")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.bits is not None and w.size != 1 << self.bits:
            raise ValueError(f"hashing model with {self.bits} bits needs {1 << self.bits} weights, got {w.size}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return int(self.weights.size)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights))

    def same_parameters(self, other: "LinearModel") -> bool:
        """Bitwise equality of everything except ``trained_at`` and ``history``."""
        return (
            self.dim == other.dim
            and self.weights.tobytes() == other.weights.tobytes()
            and self.bias == other.bias
            and self.c == other.c
            and self.loss is other.loss
            and self.bits == other.bits
        )


def predict_matrix(model: LinearModel, X: sp.spmatrix) -> np.ndarray:
    """Decision values ``X @ w + bias`` for a CSR matrix.

    Rows are summed independently in stored-index order, so one row scored
    alone gives the same float as that row scored inside a batch.
    """
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"matrix has {X.shape[1]} columns, model has {model.dim}")
    X = sp.csr_matrix(X)
    return np.asarray(X @ model.weights, dtype=np.float64) + model.bias


def predict_scores(model: LinearModel, vectors: Sequence[SparseVector]) -> list[float]:
    for v in vectors:
        if v.dim != model.dim:
            raise DimensionMismatch(f"vector dim {v.dim} != model dim {model.dim}")
    if not vectors:
        return []
    return predict_matrix(model, vectors_to_matrix(vectors, model.dim)).tolist()


def format_score(score: float) -> str:
    """Six fractional digits; negative zero is printed as zero."""
    text = f"{score:.6f}"
    return "0.000000" if text == "-0.000000" else text


def save_model(model: LinearModel, path) -> None:
    header = [
        f"dim={model.dim}",
        f"bits={'' if model.bits is None else model.bits}",
        f"c={model.c!r}",
        f"loss={model.loss.value}",
        f"bias={model.bias!r}",
        f"trained_at={format_timestamp(model.trained_at)}",
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(("\n".join(header) + "\n\n").encode("ascii"))
        fh.write(model.weights.astype("<f4").tobytes())


def load_model(path) -> LinearModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise BadModelFile(f"{path}: not a model file (bad magic)")
        header = {}
        while True:
            line = fh.readline()
            if not line:
                raise BadModelFile(f"{path}: truncated header")
            line = line.rstrip(b"\n")
            if not line:
                break
            key, _, value = line.decode("ascii").partition("=")
            header[key] = value
        try:
            dim = int(header["dim"])
            bits = int(header["bits"]) if header["bits"] else None
            c = float(header["c"])
            loss = Loss(header["loss"])
            bias = float(header.get("bias", "0"))
            trained_at = parse_timestamp(header["trained_at"])
        except (KeyError, ValueError) as exc:
            raise BadModelFile(f"{path}: bad header field: {exc}") from None
        raw = fh.read(4 * dim)
        if len(raw) != 4 * dim or fh.read(1):
            raise BadModelFile(f"{path}: expected {dim} float32 weights")
    weights = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return LinearModel(weights=weights, c=c, loss=loss, bits=bits, bias=bias, trained_at=trained_at)


def model_file_size(path) -> int:
    return Path(path).stat().st_size
