"""Glue between corpus files, features, vectorizers and learners."""

from __future__ import annotations

from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .corpus import RevisionRecord
from .features import FAMILIES, Family, extract_all, select_family
from .learner import Dataset
from .vectorizer import hash_matrix

# default C for each single-family model
FAMILY_C = {
    Family.TITLE: 0.5,
    Family.USER: 0.1,
    Family.COMMENT_STRUCT: 0.1,
    Family.COMMENT_LINK: 10.0,
    Family.COMMENT_TEXT: 1.0,
}
FAMILY_MODEL_NAMES = {
    Family.TITLE: "title",
    Family.USER: "user",
    Family.COMMENT_STRUCT: "structured-comment",
    Family.COMMENT_LINK: "links",
    Family.COMMENT_TEXT: "unstructured-comment",
}


def labeled(records: Sequence[RevisionRecord]) -> list[RevisionRecord]:
    return [r for r in records if r.label is not None]


def hashed_dataset(records: Sequence[RevisionRecord], bits: int, family: Optional[Family] = None) -> Dataset:
    """Hashed design matrix of labeled records, optionally one family only."""
    bags = (extract_all(r) for r in records)
    if family is not None:
        bags = (select_family(b, family) for b in bags)
    X = hash_matrix(bags, bits)
    y = np.array([bool(r.label) for r in records], dtype=bool)
    return Dataset(X, y, bits)


def family_datasets(records: Sequence[RevisionRecord], bits: int) -> list[Dataset]:
    bags = [extract_all(r) for r in records]
    y = np.array([bool(r.label) for r in records], dtype=bool)
    return [Dataset(hash_matrix((select_family(b, f) for b in bags), bits), y, bits) for f in FAMILIES]


def latest_timestamp(records: Sequence[RevisionRecord]) -> Optional[datetime]:
    return max((r.timestamp for r in records), default=None)
