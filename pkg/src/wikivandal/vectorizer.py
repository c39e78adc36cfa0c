"""Hashing-trick and explicit-vocabulary vectorizers over feature bags.

Hashed index of a feature = FNV-1a 64 of ``b"<Family>:<token>"`` (UTF-8)
modulo ``2**bits``. Values are binary presence flags, never counts, and no
sign hashing is applied.
"""

from __future__ import annotations

import os
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BitsOutOfRange, DimensionMismatch
from .features import Feature

MIN_BITS = 8
MAX_BITS = 30
DEFAULT_BITS = 22

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _key_hash(key: str) -> int:
    return fnv1a_64(key.encode("utf-8"))


def feature_key(feature: Feature) -> str:
    family, token = feature
    return f"{family.value}:{token}"


def check_bits(bits: int) -> int:
    if isinstance(bits, bool) or not isinstance(bits, (int, np.integer)) or not MIN_BITS <= bits <= MAX_BITS:
        raise BitsOutOfRange(f"bits must be an integer in [{MIN_BITS}, {MAX_BITS}], got {bits!r}")
    return int(bits)


def hash_index(feature: Feature, bits: int) -> int:
    return _key_hash(feature_key(feature)) & ((1 << bits) - 1)


class SparseVector:
    """Immutable sparse vector with sorted unique indices and no stored zeros."""

    __slots__ = ("dim", "indices", "values")

    def __init__(self, dim: int, indices=(), values=None):
        idx = np.asarray(indices, dtype=np.int64)
        val = np.ones(idx.shape, dtype=np.float64) if values is None else np.asarray(values, dtype=np.float64)
        if dim <= 0 and idx.size:
            raise ValueError("non-empty vector needs a positive dimension")
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D and the same length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= dim or np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing within [0, dim)")
            if not np.all(np.isfinite(val)):
                raise ValueError("values must be finite")
            keep = val != 0
            idx, val = idx[keep], val[keep]
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def __setattr__(self, name, value):
        raise AttributeError("SparseVector is immutable")

    @classmethod
    def from_index_set(cls, dim: int, indices: Iterable[int]) -> "SparseVector":
        return cls(dim, sorted(set(indices)))

    def __len__(self):
        return int(self.indices.size)

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))

    def __repr__(self):
        pairs = ", ".join(f"{i}: {v:g}" for i, v in zip(self.indices.tolist(), self.values.tolist()))
        return f"SparseVector(dim={self.dim}, {{{pairs}}})"

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def hash_vectorize(bag: Sequence[Feature], bits: int = DEFAULT_BITS) -> SparseVector:
    bits = check_bits(bits)
    mask = (1 << bits) - 1
    return SparseVector.from_index_set(1 << bits, (_key_hash(feature_key(f)) & mask for f in bag))


def hash_matrix(bags: Iterable[Sequence[Feature]], bits: int = DEFAULT_BITS) -> sp.csr_matrix:
    """Stack hashed rows into a CSR matrix (binary values, sorted indices)."""
    bits = check_bits(bits)
    mask = (1 << bits) - 1
    indptr = [0]
    indices: list[int] = []
    for bag in bags:
        row = sorted({_key_hash(feature_key(f)) & mask for f in bag})
        indices.extend(row)
        indptr.append(len(indices))
    return _binary_csr(indptr, indices, 1 << bits)


def _binary_csr(indptr, indices, dim) -> sp.csr_matrix:
    indptr = np.asarray(indptr, dtype=np.int64)
    idx = np.asarray(indices, dtype=np.int32 if dim < 2**31 else np.int64)
    data = np.ones(idx.size, dtype=np.float64)
    m = sp.csr_matrix((data, idx, indptr), shape=(indptr.size - 1, dim))
    m.has_sorted_indices = True
    return m


def vectors_to_matrix(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    """Stack SparseVectors row-wise; all must share one dimension."""
    if dim is None:
        if not vectors:
            raise ValueError("dimension needed for an empty vector list")
        dim = vectors[0].dim
    indptr = [0]
    chunks_i, chunks_v = [], []
    for v in vectors:
        if v.dim != dim:
            raise DimensionMismatch(f"vector dim {v.dim} != {dim}")
        chunks_i.append(v.indices)
        chunks_v.append(v.values)
        indptr.append(indptr[-1] + len(v))
    idx = np.concatenate(chunks_i) if chunks_i else np.zeros(0, dtype=np.int64)
    val = np.concatenate(chunks_v) if chunks_v else np.zeros(0)
    m = sp.csr_matrix((val, idx, np.asarray(indptr)), shape=(len(indptr) - 1, dim))
    m.has_sorted_indices = True
    return m


def matrix_row(m: sp.csr_matrix, i: int) -> SparseVector:
    lo, hi = m.indptr[i], m.indptr[i + 1]
    return SparseVector(m.shape[1], m.indices[lo:hi], m.data[lo:hi])


class Vocabulary:
    """Explicit token-to-column mapping, indices assigned in first-seen order."""

    def __init__(self, token_to_index: Mapping[str, int] | None = None):
        self.token_to_index: dict[str, int] = dict(token_to_index or {})
        if sorted(self.token_to_index.values()) != list(range(len(self.token_to_index))):
            raise ValueError("vocabulary indices must form the range [0, dim)")

    @property
    def dim(self) -> int:
        return len(self.token_to_index)

    def __len__(self):
        return self.dim

    def __contains__(self, key):
        return key in self.token_to_index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.token_to_index == other.token_to_index

    def index(self, feature: Feature):
        return self.token_to_index.get(feature_key(feature))

    def save(self, out) -> None:
        """Write ``key<TAB>index`` lines to a path or text stream."""
        if isinstance(out, (str, os.PathLike)):
            with open(out, "w", encoding="utf-8", newline="\n") as fh:
                return self.save(fh)
        for key, index in self.token_to_index.items():
            out.write(f"{key}\t{index}\n")

    @classmethod
    def load(cls, src) -> "Vocabulary":
        if isinstance(src, (str, os.PathLike)):
            with open(src, encoding="utf-8") as fh:
                return cls.load(fh)
        mapping = {}
        for line in src:
            line = line.rstrip("\n")
            if not line:
                continue
            key, index = line.rsplit("\t", 1)
            mapping[key] = int(index)
        return cls(mapping)


def dict_fit(bags: Iterable[Sequence[Feature]]) -> Vocabulary:
    mapping: dict[str, int] = {}
    for bag in bags:
        for f in bag:
            mapping.setdefault(feature_key(f), len(mapping))
    return Vocabulary(mapping)


def dict_vectorize(bag: Sequence[Feature], vocab: Vocabulary) -> SparseVector:
    found = (vocab.token_to_index.get(feature_key(f)) for f in bag)
    return SparseVector.from_index_set(vocab.dim, (i for i in found if i is not None))


def dict_matrix(bags: Iterable[Sequence[Feature]], vocab: Vocabulary) -> sp.csr_matrix:
    lookup = vocab.token_to_index
    indptr = [0]
    indices: list[int] = []
    for bag in bags:
        row = sorted({i for i in (lookup.get(feature_key(f)) for f in bag) if i is not None})
        indices.extend(row)
        indptr.append(len(indices))
    return _binary_csr(indptr, indices, vocab.dim)


def is_injective(keys: Iterable[str], bits: int) -> bool:
    """True if no two distinct keys share a hashed bucket at ``bits``."""
    bits = check_bits(bits)
    mask = (1 << bits) - 1
    seen = set()
    for key in set(keys):
        b = _key_hash(key) & mask
        if b in seen:
            return False
        seen.add(b)
    return True
