"""Synthetic revision corpora with planted vandalism signal.

Writes ``dump.xml``, ``meta.csv`` and ``labels.csv`` in the corpus formats.
The positive count is exact (``round(n * positive_rate)``); each positive
carries the planted comment word with probability ``signal_strength``.
Vandals are also more often anonymous and come from a few "hot" address
blocks, a weaker signal that the user features can pick up.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .corpus import (
    Contributor,
    GeoMeta,
    RevisionRecord,
    join,
    parse_dump,
    parse_labels,
    parse_meta,
    parse_timestamp,
    write_dump,
    write_labels,
    write_meta,
)
from .errors import IoFailure

DUMP_FILE = "dump.xml"
META_FILE = "meta.csv"
LABEL_FILE = "labels.csv"

PLANTED_TOKEN = "zxqvandal"

_ACTIONS = [
    ("wbsetdescription-add", 1), ("wbsetdescription-set", 1), ("wbsetlabel-add", 1),
    ("wbsetlabel-set", 1), ("wbsetaliases-add", 1), ("wbcreateclaim-create", 1),
    ("wbsetclaim-update", 2), ("wbsetsitelink-add", 1), ("wbeditentity-update", 0),
    ("wbsetreference-add", 2), ("wbremoveclaims-remove", 1),
]
_LANGS = ["en", "es", "de", "fr", "it", "nl", "ru", "pt", "sv", "ja"]
_WORDS = (
    "futbolista irlandes politician american actor village commune river species film album "
    "painter writer football player human settlement municipality church school building "
    "mountain lake island book song band company university hospital bridge station"
).split()
_DECOY_WORDS = "lol hello test idiot xxx haha ok poop stupid yes no".split()
_PROPERTIES = ["P31", "P17", "P21", "P27", "P106", "P569", "P570", "P625", "P131", "P279"]
_TAGS = ["mobile edit", "mobile web edit", "visualeditor", "OAuth CID: 12", "HHVM"]

# (continent, country, region, county, city, time zone) per address block
_PLACES = [
    ("EU", "GB", "EN", "WEST_YORKSHIRE", "LEEDS", "GMT"),
    ("EU", "GB", "EN", "GREATER_LONDON", "LONDON", "GMT"),
    ("EU", "DE", "BE", None, "BERLIN", "CET"),
    ("EU", "FR", "IDF", "PARIS", "PARIS", "CET"),
    ("NA", "US", "CA", "LOS_ANGELES", "LOS_ANGELES", "PST"),
    ("NA", "US", "NY", "NEW_YORK", "NEW_YORK", "EST"),
    ("AS", "IN", "MH", "MUMBAI", "MUMBAI", "IST"),
    ("AS", "JP", "13", None, "TOKYO", "JST"),
    ("SA", "BR", "SP", None, "SAO_PAULO", "BRT"),
    ("OC", "AU", "NSW", None, "SYDNEY", "AEST"),
    ("EU", "ES", "MD", "MADRID", "MADRID", "CET"),
    ("AF", "ZA", "GT", None, "JOHANNESBURG", "SAST"),
]
_HOT_BLOCKS = 3


@dataclass(frozen=True)
class SynthConfig:
    n_revisions: int = 10_000
    positive_rate: float = 0.0025
    signal_strength: float = 0.9
    start: datetime = datetime(2015, 1, 1, tzinfo=timezone.utc)
    end: datetime = datetime(2016, 5, 1, tzinfo=timezone.utc)
    anon_rate: float = 0.1
    seed: int = 0
    n_pages: int = 0  # 0: n_revisions // 4
    n_users: int = 0  # 0: n_revisions // 20

    def __post_init__(self):
        for name in ("start", "end"):
            value = getattr(self, name)
            if isinstance(value, str):
                object.__setattr__(self, name, parse_timestamp(value))
        if self.n_revisions < 1:
            raise ValueError("n_revisions must be positive")
        if not 0 < self.positive_rate < 1:
            raise ValueError("positive_rate must be in (0, 1)")
        if not 0 <= self.signal_strength <= 1 or not 0 <= self.anon_rate <= 1:
            raise ValueError("signal_strength and anon_rate must be in [0, 1]")
        if not self.start < self.end:
            raise ValueError("start must be earlier than end")

    @property
    def n_positive(self) -> int:
        return int(round(self.n_revisions * self.positive_rate))


@dataclass(frozen=True)
class CorpusPaths:
    dump: Path
    meta: Path
    labels: Path

    @classmethod
    def in_dir(cls, directory) -> "CorpusPaths":
        d = Path(directory)
        return cls(d / DUMP_FILE, d / META_FILE, d / LABEL_FILE)


def _ip(rng: random.Random, block: int) -> str:
    # each block owns a /16 so path features carry the place
    return f"{10 + 17 * block}.{(block * 37) % 250 + 1}.{rng.randrange(256)}.{rng.randrange(1, 255)}"


def _comment(rng: random.Random, planted: bool, decoy: bool) -> str:
    action, n = rng.choice(_ACTIONS)
    lang = rng.choice(_LANGS)
    parts = [f"/* {action}:{n}|{lang if n else ''} */"]
    if action.startswith(("wbcreateclaim", "wbsetclaim", "wbsetreference")):
        parts.append(f"[[Property:{rng.choice(_PROPERTIES)}]]: [[Q{rng.randrange(1, 100000)}]]")
    words = rng.sample(_WORDS, rng.randrange(0, 4))
    if decoy:
        words.append(rng.choice(_DECOY_WORDS))
    if planted:
        words.insert(rng.randrange(len(words) + 1), PLANTED_TOKEN)
    if words:
        parts.append(" ".join(words))
    if rng.random() < 0.05:
        parts.append("#autolist2")
    return " ".join(parts)


def synthesize(config: SynthConfig) -> list[RevisionRecord]:
    """Build the labeled records in chronological (and revision id) order."""
    rng = random.Random(config.seed)
    n = config.n_revisions
    span = (config.end - config.start).total_seconds()
    offsets = sorted(rng.random() * span for _ in range(n))
    positives = set(rng.sample(range(n), config.n_positive))
    n_pages = config.n_pages or max(1, n // 4)
    n_users = config.n_users or max(1, n // 20)
    pages = [f"Q{q}" for q in rng.sample(range(1, 50 * n_pages + 10), n_pages)]
    users = [f"User{u}" for u in range(n_users)]

    records = []
    rev_id = 100_000_000
    last_rev: dict[str, int] = {}
    for i in range(n):
        rev_id += rng.randrange(1, 50)
        positive = i in positives
        title = pages[int(rng.paretovariate(1.2)) % n_pages] if rng.random() < 0.5 else rng.choice(pages)
        anonymous = rng.random() < (0.8 if positive else config.anon_rate)
        geo = None
        if anonymous:
            if positive and rng.random() < 0.8:
                block = rng.randrange(_HOT_BLOCKS)
            else:
                block = rng.randrange(_HOT_BLOCKS, len(_PLACES))
            contributor = Contributor.anonymous(_ip(rng, block))
            geo = GeoMeta(*_PLACES[block])
        else:
            idx = min(int(rng.expovariate(1.0 / max(1, n_users / 10))), n_users - 1)
            contributor = Contributor.named(users[idx], 1000 + idx)
        planted = positive and rng.random() < config.signal_strength
        decoy = rng.random() < (0.3 if positive else 0.02)
        tags = tuple(rng.sample(_TAGS, 1)) if rng.random() < 0.1 else ()
        ts = config.start + timedelta(seconds=int(offsets[i]))
        records.append(
            RevisionRecord(
                page_title=title,
                page_id=int(title[1:]) + 7,
                revision_id=rev_id,
                parent_id=last_rev.get(title),
                timestamp=ts,
                contributor=contributor,
                comment=_comment(rng, planted, decoy),
                tags=tags,
                geo=geo,
                label=positive,
            )
        )
        last_rev[title] = rev_id
    return records


def _payload(record: RevisionRecord) -> str:
    return json.dumps({"type": "item", "id": record.page_title, "labels": {}}, sort_keys=True)


def generate(config: SynthConfig, output_dir) -> CorpusPaths:
    """Write a synthetic corpus into ``output_dir``; same config, same bytes."""
    paths = CorpusPaths.in_dir(output_dir)
    records = synthesize(config)
    try:
        paths.dump.parent.mkdir(parents=True, exist_ok=True)
        with open(paths.dump, "wb") as fh:
            write_dump(records, fh, text=_payload)
        with open(paths.meta, "wb") as fh:
            write_meta(records, fh)
        with open(paths.labels, "wb") as fh:
            write_labels(records, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write corpus to {output_dir}: {exc}") from exc
    return paths


def read_corpus(directory) -> list[RevisionRecord]:
    """Parse and join the three corpus files of a directory."""
    paths = CorpusPaths.in_dir(directory)
    for p in (paths.dump, paths.meta, paths.labels):
        if not p.is_file():
            raise IoFailure(f"missing corpus file {p}")
    with open(paths.meta, "rb") as fh:
        meta = parse_meta(fh)
    with open(paths.labels, "rb") as fh:
        labels = parse_labels(fh)
    with open(paths.dump, "rb") as fh:
        return list(join(parse_dump(fh), meta, labels))


def validate(output_dir) -> dict:
    """Re-parse a corpus and summarize it; any rejected row or record is fatal."""
    paths = CorpusPaths.in_dir(output_dir)
    for p in (paths.dump, paths.meta, paths.labels):
        if not p.is_file():
            raise IoFailure(f"missing corpus file {p}")
    with open(paths.meta, "rb") as fh:
        meta = parse_meta(fh)
    with open(paths.labels, "rb") as fh:
        labels = parse_labels(fh)
    if meta.skipped or labels.skipped:
        raise IoFailure(f"rejected rows: meta {meta.skipped}, labels {labels.skipped}")
    with open(paths.dump, "rb") as fh:
        reader = parse_dump(fh)
        n_records = sum(1 for _ in reader)
    if reader.stats.skipped_total:
        raise IoFailure(f"rejected revisions: {dict(reader.stats.skipped)}")
    n_pos = sum(labels.values())
    return {
        "records": n_records,
        "meta_rows": len(meta),
        "labels": len(labels),
        "positives": n_pos,
        "positive_rate": n_pos / len(labels) if labels else 0.0,
    }
