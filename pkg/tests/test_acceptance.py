"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
printed at the end of the session.
"""

import subprocess
import sys
import textwrap
import time
from datetime import datetime, timezone

import numpy as np
import pytest
import scipy.sparse as sp

import oracles
from conftest import ACCEPTANCE_LINES
from wikivandal.cli import run
from wikivandal.corpus import Contributor, GeoMeta, RevisionRecord
from wikivandal.features import FAMILIES, extract_all, ip_path_features, parse_comment, user_features
from wikivandal.learner import (
    Dataset,
    TrainConfig,
    fit_stack,
    format_score,
    l1svm_objective,
    load_model,
    logistic_objective,
    predict_matrix,
    predict_scores,
    save_model,
    train_l1svm,
)
from wikivandal.metrics import fraction_split_spec, pr_auc, roc_auc, time_split
from wikivandal.pipeline import FAMILY_C, FAMILY_MODEL_NAMES, family_datasets, labeled
from wikivandal.serve import ScoringServer, stream_client
from wikivandal.synth import SynthConfig, read_corpus, synthesize
from wikivandal.vectorizer import dict_fit, dict_matrix, hash_matrix, hash_vectorize, is_injective


def report(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


@pytest.fixture(scope="module")
def big_corpus(tmp_path_factory):
    """The 100k-revision corpus, generated through the CLI with timing."""
    d = tmp_path_factory.mktemp("big")
    t0 = time.perf_counter()
    assert run(["gen", "--n", "100000", "--seed", "0", "--positive-rate", "0.0025", "--signal", "0.9",
                "--out", str(d)]) == 0
    return d, time.perf_counter() - t0


# 1 -------------------------------------------------------------------------


def test_criterion_1_comment_goldens():
    a = parse_comment("/* wbsdescription-add:1|es */ futbolista irlandes")
    b = parse_comment("/* wbscreateclaim-create:1| */ [[Property:P31]]: [[Q5]], #autolist2")
    got = (a.structured, a.links, a.unstructured, b.structured, b.links, b.unstructured)
    want = (("wbsdescription-add", "1", "es"), (), ("futbolista", "irlandes"),
            ("wbscreateclaim-create", "1"), ("Property:P31", "Q5"), ("autolist2",))
    ok = got == want
    report(1, ok, "both example comments parsed exactly" if ok else f"got {got}")
    assert ok


# 2 -------------------------------------------------------------------------


def test_criterion_2_user_goldens():
    path = ip_path_features("90.219.230.105")
    leeds = RevisionRecord("Q1", 1, 1, datetime(2015, 1, 1, tzinfo=timezone.utc), Contributor.anonymous("90.219.230.105"),
                           geo=GeoMeta("EU", "GB", "EN", "WEST_YORKSHIRE", "LEEDS", "GMT"))
    tokens = set(user_features(leeds))
    want = {"country_code=GB", "continent_code=EU", "time_zone=GMT", "region_code=EN",
            "city_name=LEEDS", "county_name=WEST_YORKSHIRE"}
    ok = path == ["90", "90_219", "90_219_230", "90_219_230_105"] and want <= tokens and "anonymous=true" in tokens
    report(2, ok, f"ip path {path}, Leeds tokens present={want <= tokens}")
    assert ok


# 3 -------------------------------------------------------------------------


def test_criterion_3_metric_oracles():
    rng = np.random.default_rng(2024)
    instances = []
    for _ in range(1000):
        n = int(rng.integers(2, 1001))
        if rng.random() < 0.5:
            scores = rng.integers(0, int(rng.integers(2, 50)), n).astype(float)  # heavy ties
        else:
            scores = np.round(rng.normal(size=n), int(rng.integers(1, 4)))
        labels = rng.random(n) < rng.uniform(0.01, 0.6)
        i, j = rng.permutation(n)[:2]
        labels[i], labels[j] = True, False
        instances.append((scores, labels))

    t0 = time.perf_counter()
    got = [(roc_auc(s, y), pr_auc(s, y)) for s, y in instances]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for (s, y), (auc, ap) in zip(instances, got):
        worst = max(worst, abs(auc - oracles.auc_pairs_np(s, y)), abs(ap - oracles.average_precision_thresholds(s, y)))
    ok = worst <= 1e-9 and elapsed < 10
    report(3, ok, f"max deviation {worst:.2e} over 1000 instances, metric time {elapsed:.2f}s")
    assert worst <= 1e-9
    assert elapsed < 10


# 4 -------------------------------------------------------------------------


@pytest.mark.parametrize("solver", ["owlqn", "cd"])
def test_criterion_4_solver_oracle(solver):
    rng = np.random.default_rng(404)
    worst_gap, monotone, bounded = 0.0, True, True
    for _ in range(25):
        X, y, c = oracles.tiny_problem(rng)
        model = train_l1svm(Dataset(sp.csr_matrix(X), y), TrainConfig(c=c, solver=solver, tol=1e-15, max_epochs=20000))
        f = l1svm_objective(sp.csr_matrix(X), y, model.weights, model.bias, c)
        best = oracles.svm_minimum(np.hstack([X, np.ones((len(y), 1))]), np.where(y, 1.0, -1.0), c)
        worst_gap = max(worst_gap, abs(f - best))
        h = np.array(model.history)
        monotone &= bool(np.all(np.diff(h) <= 0))
        bounded &= bool(np.all(h <= c * len(y) + 1e-12)) and f <= c * len(y) + 1e-12
    ok = worst_gap <= 1e-6 and monotone and bounded
    report(4, ok, f"[{solver}] max |F - F*| {worst_gap:.2e}, non-increasing={monotone}, F<=C*n={bounded}")
    assert worst_gap <= 1e-6 and monotone and bounded


# 5 -------------------------------------------------------------------------


def test_criterion_5_hash_dict_equivalence():
    records = synthesize(SynthConfig(n_revisions=5000, positive_rate=0.02, signal_strength=0.9, seed=3))
    bags = [extract_all(r) for r in records]
    vocab = dict_fit(bags)
    bits = next(b for b in range(16, 25) if is_injective(vocab.token_to_index, b))
    y = np.array([r.label for r in records])
    spec = fraction_split_spec([r.timestamp for r in records], 0.8, 0.1)
    split = np.array([spec.slot(r.timestamp) for r in records])
    train, held = split == 0, split > 0

    H = hash_matrix(bags, bits)
    D = dict_matrix(bags, vocab)
    config = TrainConfig(c=0.5)
    mh = train_l1svm(Dataset(H[train], y[train], bits), config)
    md = train_l1svm(Dataset(D[train], y[train]), config)
    fh = l1svm_objective(H[train], y[train], mh.weights, mh.bias, 0.5)
    fd = l1svm_objective(D[train], y[train], md.weights, md.bias, 0.5)
    auc_h = roc_auc(predict_matrix(mh, H[held]), y[held])
    auc_d = roc_auc(predict_matrix(md, D[held]), y[held])
    ok = abs(fh - fd) <= 1e-6 and auc_h == auc_d
    report(5, ok, f"injective at {bits} bits (vocab {vocab.dim}); |dF| {abs(fh - fd):.2e}; AUC {auc_h:.6f} vs {auc_d:.6f}")
    assert abs(fh - fd) <= 1e-6
    assert auc_h == auc_d


# 6 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_end_to_end(big_corpus, tmp_path):
    corpus, gen_time = big_corpus
    split = ["--train-end", "0.8", "--valid-end", "0.9"]
    model = tmp_path / "m.bin"
    t0 = time.perf_counter()
    assert run(["train", "--corpus", str(corpus), "--model", str(model), "--c", "0.5", *split]) == 0
    out = tmp_path / "eval.csv"
    assert run(["eval", "--corpus", str(corpus), "--model", str(model), "--out", str(out), *split]) == 0
    total = gen_time + time.perf_counter() - t0
    auc = float(out.read_text().splitlines()[1].split(",")[0])
    ok = auc >= 0.95 and total < 300
    report(6, ok, f"test ROC AUC {auc:.4f}, gen+train+eval {total:.1f}s")
    assert auc >= 0.95
    assert total < 300


# 7 -------------------------------------------------------------------------


def test_criterion_7_stream_equals_batch(tmp_path):
    bits = 22
    records = synthesize(SynthConfig(n_revisions=10000, positive_rate=0.01, anon_rate=0.2, seed=7))
    model = train_l1svm(Dataset(hash_matrix((extract_all(r) for r in records), bits),
                                [r.label for r in records], bits), TrainConfig(c=0.5))
    path = tmp_path / "m.bin"
    save_model(model, path)
    model = load_model(path)
    batch = predict_scores(model, [hash_vectorize(extract_all(r), bits) for r in records])
    expected = [f"{r.revision_id}\t{format_score(s)}" for r, s in zip(records, batch)]
    with ScoringServer(model, bits) as server:
        t0 = time.perf_counter()
        lines = stream_client(server.address, records)
        elapsed = time.perf_counter() - t0
    got = [str(x) for x in lines]
    rate = len(records) / elapsed
    ok = got == expected and rate >= 1000
    report(7, ok, f"{sum(a == b for a, b in zip(got, expected))}/{len(expected)} lines identical, {rate:.0f} revisions/s")
    assert got == expected
    assert rate >= 1000


# 8 -------------------------------------------------------------------------

MEMORY_PROBE = textwrap.dedent("""
    import re, sys, tracemalloc
    from wikivandal.corpus import parse_dump

    def hwm():
        # resident-set high-water mark in bytes
        with open("/proc/self/status") as fh:
            return int(re.search(r"VmHWM:\\s+(\\d+)", fh.read()).group(1)) * 1024

    with open(sys.argv[1], "rb") as fh:
        with open("/proc/self/clear_refs", "w") as refs:
            refs.write("5")  # reset the high-water mark to the current RSS
        base = hwm()
        tracemalloc.start()
        records = list(parse_dump(fh))
        _, py_peak = tracemalloc.get_traced_memory()
    print(len(records), hwm() - base, py_peak)
""")


def test_criterion_8_memory_and_model_size(tmp_path):
    fixture = tmp_path / "huge.xml"
    chunk = b"{\"labels\": {\"en\": \"abcdefghij\"}, \"claims\": [1, 2, 3]} " * 1024
    with open(fixture, "wb") as fh:
        fh.write(b"<mediawiki><page><title>Q1</title><ns>0</ns><id>1</id><revision><id>10</id>"
                 b"<timestamp>2016-01-01T00:00:00Z</timestamp><contributor><ip>1.2.3.4</ip></contributor>"
                 b"<comment>x</comment><model>wikibase-item</model><format>application/json</format>"
                 b"<text xml:space=\"preserve\">")
        written = 0
        while written < 100 * 1024 * 1024:
            fh.write(chunk)
            written += len(chunk)
        fh.write(b"</text></revision></page></mediawiki>")
    out = subprocess.run([sys.executable, "-c", MEMORY_PROBE, str(fixture)], capture_output=True, text=True, check=True)
    n_records, growth, py_peak = map(int, out.stdout.split())

    model_path = tmp_path / "m22.bin"
    model = train_l1svm(Dataset(hash_matrix([[], []], 22), [True, False], 22), TrainConfig(c=1.0))
    save_model(model, model_path)
    size = model_path.stat().st_size
    ok = n_records == 1 and max(growth, py_peak) < 10 * 2**20 and size <= 64 * 2**20
    report(8, ok, f"100 MB text element: +{growth / 2**20:.2f} MB resident peak, "
                  f"{py_peak / 2**20:.2f} MB traced; 2^22 model file {size / 2**20:.1f} MB")
    assert n_records == 1
    assert growth < 10 * 2**20
    assert py_peak < 10 * 2**20
    assert size <= 64 * 2**20


# 9 -------------------------------------------------------------------------


def test_criterion_9_determinism(tmp_path):
    digests = []
    for attempt in ("a", "b"):
        d = tmp_path / attempt
        assert run(["gen", "--n", "20000", "--seed", "5", "--out", str(d / "corpus")]) == 0
        assert run(["train", "--corpus", str(d / "corpus"), "--bits", "20", "--seed", "5",
                    "--train-end", "0.8", "--valid-end", "0.9", "--model", str(d / "m.bin")]) == 0
        assert run(["gridsearch", "--corpus", str(d / "corpus"), "--bits", "18", "--seed", "5",
                    "--train-end", "0.8", "--valid-end", "0.9", "--candidates", "1e-3,0.1,0.5,1",
                    "--out", str(d / "grid.csv"), "--model", str(d / "best.bin")]) == 0
        digests.append({p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    same = digests[0] == digests[1]
    report(9, same, f"{len(digests[0])} artifacts from gen/train/gridsearch, identical across runs={same}")
    assert same


# 10 ------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_stacker(big_corpus):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(20):
        n, k = int(rng.integers(5, 60)), int(rng.integers(1, 7))
        X = rng.normal(size=(n, k)) * rng.uniform(0.1, 3)
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        w = rng.normal(size=k)
        lam = float(rng.uniform(0.01, 5))
        _, grad = logistic_objective(w, X, y, lam)
        fd = oracles.central_difference(lambda v: oracles.logistic_value(v, X, y, lam), w, h=1e-6)
        worst = max(worst, float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0))))

    corpus, _ = big_corpus
    records = labeled(read_corpus(corpus))
    train, _, test = time_split(records, fraction_split_spec([r.timestamp for r in records], 0.8, 0.1))
    ensemble, _ = fit_stack(family_datasets(train, 20), [TrainConfig(c=FAMILY_C[f]) for f in FAMILIES], seed=0)
    test_sets = family_datasets(test, 20)
    y = test_sets[0].y
    singles = {FAMILY_MODEL_NAMES[f]: roc_auc(predict_matrix(m, d.X), y)
               for f, m, d in zip(FAMILIES, ensemble.base, test_sets)}
    stacked = roc_auc(ensemble.score([d.X for d in test_sets]), y)
    best = max(singles.values())
    ok = worst <= 1e-6 and stacked >= best - 0.02
    report(10, ok, f"gradient rel. error {worst:.1e}; stacked AUC {stacked:.4f} vs best single {best:.4f}")
    assert worst <= 1e-6
    assert stacked >= best - 0.02


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
