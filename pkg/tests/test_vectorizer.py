import itertools
import string

import numpy as np
import pytest

from wikivandal.errors import BitsOutOfRange
from wikivandal.features import Family, Feature
from wikivandal.vectorizer import (
    SparseVector,
    Vocabulary,
    dict_fit,
    dict_matrix,
    dict_vectorize,
    fnv1a_64,
    hash_matrix,
    hash_vectorize,
    is_injective,
)


def fnv_oracle(data: bytes) -> int:
    # textbook FNV-1a, 64-bit
    h = 14695981039346656037
    for byte in data:
        h = ((h ^ byte) * 1099511628211) % 2**64
    return h


def test_fnv_reference_values():
    # published test vectors
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8
    for s in [b"Title:Q1", b"User:username=Bob", "CommentText:ñ".encode()]:
        assert fnv1a_64(s) == fnv_oracle(s)


def test_single_token_index():
    v = hash_vectorize([Feature(Family.TITLE, "Q1")], 20)
    assert v.dim == 2**20
    assert list(v.indices) == [fnv_oracle(b"Title:Q1") % 2**20]
    assert list(v.values) == [1.0]


def test_empty_bag_and_bits_range():
    v = hash_vectorize([], 10)
    assert v.dim == 1024 and len(v.indices) == 0
    for bits in (7, 31, 2.5, True):
        with pytest.raises(BitsOutOfRange):
            hash_vectorize([], bits)


def test_collision_is_clipped():
    seen = {}
    for a, b in itertools.product(string.ascii_lowercase, repeat=2):
        tok = a + b
        idx = fnv_oracle(b"Title:" + tok.encode()) % 256
        if idx in seen:
            pair = (seen[idx], tok)
            break
        seen[idx] = tok
    bag = [Feature(Family.TITLE, t) for t in pair]
    v = hash_vectorize(bag, 8)
    assert list(v.values) == [1.0] and len(v.indices) == 1
    assert not is_injective([f.key() for f in bag], 8)


def test_family_prefix_separates_tokens():
    v = hash_vectorize([Feature(Family.TITLE, "x"), Feature(Family.USER, "x")], 30)
    assert len(v.indices) == 2


def test_order_independence_and_binary():
    bag = [Feature(Family.COMMENT_TEXT, w) for w in "a b c a a d".split()]
    v1 = hash_vectorize(bag, 12)
    v2 = hash_vectorize(list(reversed(bag)), 12)
    assert v1 == v2
    assert set(v1.values.tolist()) == {1.0}
    assert np.all(np.diff(v1.indices) > 0)


def test_hash_matrix_rows_match_vectors():
    bags = [[Feature(Family.TITLE, "Q%d" % i), Feature(Family.USER, "u")] for i in range(20)] + [[]]
    m = hash_matrix(bags, 16)
    assert m.shape == (21, 2**16)
    for i, bag in enumerate(bags):
        v = hash_vectorize(bag, 16)
        row = m.getrow(i)
        assert sorted(row.indices.tolist()) == v.indices.tolist()


def test_sparse_vector_invariants():
    with pytest.raises(ValueError):
        SparseVector(4, [2, 1], [1.0, 1.0])
    with pytest.raises(ValueError):
        SparseVector(4, [4], [1.0])
    assert len(SparseVector(4, [1], [0.0])) == 0
    v = SparseVector(4, [1, 3], [1.0, 2.0])
    assert v.to_dense().tolist() == [0, 1, 0, 2]


def test_dict_fit_examples():
    assert dict_fit([]).dim == 0
    vocab = dict_fit([[Feature(Family.TITLE, "a")], [Feature(Family.TITLE, "a"), Feature(Family.USER, "b")]])
    assert vocab.dim == 2
    assert vocab.token_to_index == {"Title:a": 0, "User:b": 1}
    assert dict_fit([[Feature(Family.TITLE, str(i))] for i in range(1000)]).dim == 1000


def test_dict_vectorize():
    vocab = dict_fit([[Feature(Family.TITLE, "a")], [Feature(Family.USER, "b")]])
    assert len(dict_vectorize([], vocab).indices) == 0
    v = dict_vectorize([Feature(Family.USER, "b"), Feature(Family.USER, "zzz")], vocab)
    assert v.indices.tolist() == [1] and v.dim == 2
    v = dict_vectorize([Feature(Family.TITLE, "a")] * 2, vocab)
    assert v.values.tolist() == [1.0]


def test_vocabulary_save_load(tmp_path):
    vocab = dict_fit([[Feature(Family.TITLE, "a b"), Feature(Family.COMMENT_LINK, "Property:P31")]])
    path = tmp_path / "vocab.tsv"
    vocab.save(path)
    assert path.read_text().splitlines()[1] == "CommentLink:Property:P31\t1"
    assert Vocabulary.load(path).token_to_index == vocab.token_to_index


def test_injective_vocab_gives_permuted_rows():
    bags = [[Feature(Family.TITLE, "Q%d" % (i % 7)), Feature(Family.COMMENT_TEXT, "w%d" % (i % 5))] for i in range(30)]
    vocab = dict_fit(bags)
    assert is_injective(vocab.token_to_index, 20)
    perm = {j: fnv_oracle(k.encode()) % 2**20 for k, j in vocab.token_to_index.items()}
    H = hash_matrix(bags, 20)
    D = dict_matrix(bags, vocab)
    for i in range(len(bags)):
        assert sorted(perm[j] for j in D.getrow(i).indices) == sorted(H.getrow(i).indices)
