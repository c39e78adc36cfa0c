import filecmp

import pytest

from wikivandal.corpus import MalformedXml
from wikivandal.errors import IoFailure
from wikivandal.learner import TrainConfig, predict_matrix, train_l1svm
from wikivandal.metrics import fraction_split_spec, roc_auc, time_split
from wikivandal.pipeline import hashed_dataset
from wikivandal.synth import PLANTED_TOKEN, SynthConfig, generate, read_corpus, synthesize, validate


def test_exact_positive_count_and_order():
    recs = synthesize(SynthConfig(n_revisions=10000, positive_rate=0.0025, seed=1))
    assert len(recs) == 10000
    assert sum(r.label for r in recs) == 25
    ids = [r.revision_id for r in recs]
    ts = [r.timestamp for r in recs]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)
    assert ts == sorted(ts)


def test_planted_signal_strength():
    recs = synthesize(SynthConfig(n_revisions=4000, positive_rate=0.05, signal_strength=1.0, seed=2))
    assert all(PLANTED_TOKEN in r.comment for r in recs if r.label)
    assert not any(PLANTED_TOKEN in r.comment for r in recs if not r.label)
    none = synthesize(SynthConfig(n_revisions=4000, positive_rate=0.05, signal_strength=0.0, seed=2))
    assert not any(PLANTED_TOKEN in r.comment for r in none)


def test_generate_is_deterministic_and_round_trips(tmp_path):
    cfg = SynthConfig(n_revisions=1500, seed=7, anon_rate=0.3)
    a, b = tmp_path / "a", tmp_path / "b"
    generate(cfg, a)
    generate(cfg, b)
    for name in ("dump.xml", "meta.csv", "labels.csv"):
        assert filecmp.cmp(a / name, b / name, shallow=False)
    assert read_corpus(a) == synthesize(cfg)
    summary = validate(a)
    assert summary["records"] == 1500 and summary["labels"] == 1500
    assert summary["positives"] == cfg.n_positive


def test_anonymous_users_carry_geo():
    recs = synthesize(SynthConfig(n_revisions=2000, anon_rate=0.5, seed=3))
    anon = [r for r in recs if r.contributor.is_anonymous]
    assert anon and all(r.geo is not None and r.geo.country_code for r in anon)
    assert all(r.geo is None for r in recs if not r.contributor.is_anonymous)


def test_validate_faults(tmp_path):
    with pytest.raises(IoFailure):
        validate(tmp_path)
    generate(SynthConfig(n_revisions=200, seed=1), tmp_path)
    dump = tmp_path / "dump.xml"
    data = bytearray(dump.read_bytes())
    data[data.index(b"<revision>") + 1] = ord("#")
    dump.write_bytes(bytes(data))
    with pytest.raises(MalformedXml):
        validate(tmp_path)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(positive_rate=0.0)
    with pytest.raises(ValueError):
        SynthConfig(start="2016-01-01", end="2015-01-01")


def test_full_signal_is_learnable():
    recs = synthesize(SynthConfig(n_revisions=10000, positive_rate=0.01, signal_strength=1.0, seed=5))
    train, valid, test = time_split(recs, fraction_split_spec([r.timestamp for r in recs], 0.8, 0.1))
    rest = valid + test
    model = train_l1svm(hashed_dataset(train, 18), TrainConfig(c=0.5))
    data = hashed_dataset(rest, 18)
    assert roc_auc(predict_matrix(model, data.X), data.y) >= 0.99
