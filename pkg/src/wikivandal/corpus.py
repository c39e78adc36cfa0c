"""Streaming readers and writers for revision dumps, meta CSV and label CSV.

The dump reader is built on expat and never keeps the ``<text>`` payload:
character data inside ``text`` is dropped as it arrives, so memory is bounded
by the largest non-text element no matter how large the revision JSON is.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import BinaryIO, Iterable, Iterator, Optional
from xml.parsers import expat
from xml.sax.saxutils import escape

from .errors import BadHeader, MalformedXml

log = logging.getLogger(__name__)

CHUNK_SIZE = 1 << 16

META_HEADER = [
    "REVISION_ID",
    "CONTINENT_CODE",
    "COUNTRY_CODE",
    "REGION_CODE",
    "COUNTY_NAME",
    "CITY_NAME",
    "TIME_ZONE",
    "TAGS",
]
LABEL_HEADER = ["REVISION_ID", "ROLLBACK_REVERTED"]

GEO_FIELDS = (
    "continent_code",
    "country_code",
    "region_code",
    "county_name",
    "city_name",
    "time_zone",
)

_IP_RE = re.compile(r"^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$")


def is_dotted_quad(ip: str) -> bool:
    m = _IP_RE.match(ip)
    return bool(m) and all(int(octet) <= 255 for octet in m.groups())


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 date or date-time into an aware UTC datetime.

    A bare date means midnight UTC; naive date-times are taken as UTC.
    """
    text = text.strip()
    if len(text) == 10:
        d = date.fromisoformat(text)
        return datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


class ContributorKind(enum.Enum):
    NAMED = "named"
    ANONYMOUS = "anonymous"


@dataclass(frozen=True)
class Contributor:
    kind: ContributorKind
    username: Optional[str] = None
    user_id: Optional[int] = None
    ip: Optional[str] = None

    def __post_init__(self):
        if self.kind is ContributorKind.NAMED:
            if self.username is None or self.ip is not None:
                raise ValueError("named contributor needs a username and no ip")
        else:
            if self.ip is None or not is_dotted_quad(self.ip):
                raise ValueError(f"anonymous contributor needs a dotted-quad ip, got {self.ip!r}")
            if self.username is not None or self.user_id is not None:
                raise ValueError("anonymous contributor cannot carry a username")

    @classmethod
    def named(cls, username: str, user_id: Optional[int] = None) -> "Contributor":
        return cls(ContributorKind.NAMED, username=username, user_id=user_id)

    @classmethod
    def anonymous(cls, ip: str) -> "Contributor":
        return cls(ContributorKind.ANONYMOUS, ip=ip)

    @property
    def is_anonymous(self) -> bool:
        return self.kind is ContributorKind.ANONYMOUS


@dataclass(frozen=True)
class GeoMeta:
    continent_code: Optional[str] = None
    country_code: Optional[str] = None
    region_code: Optional[str] = None
    county_name: Optional[str] = None
    city_name: Optional[str] = None
    time_zone: Optional[str] = None

    def items(self) -> list[tuple[str, str]]:
        """Present fields as (name, value) pairs in canonical order."""
        out = []
        for name in GEO_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out.append((name, value))
        return out

    def is_empty(self) -> bool:
        return not self.items()


@dataclass(frozen=True)
class RevisionRecord:
    page_title: str
    page_id: int
    revision_id: int
    timestamp: datetime
    contributor: Contributor
    comment: str = ""
    parent_id: Optional[int] = None
    tags: tuple[str, ...] = ()
    geo: Optional[GeoMeta] = None
    label: Optional[bool] = None


@dataclass
class ParseStats:
    records: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())


class ParsedTable(dict):
    """A ``dict`` keyed by revision id that also remembers how many rows were skipped."""

    def __init__(self):
        super().__init__()
        self.skipped = 0


# --------------------------------------------------------------------------
# dump XML


_PAGE_FIELDS = {"title", "id"}
_REVISION_FIELDS = {"id", "parentid", "timestamp", "comment"}
_CONTRIBUTOR_FIELDS = {"username", "id", "ip"}


class DumpReader:
    """Lazy iterator of :class:`RevisionRecord` over a dump byte stream.

    Not thread-safe; iterate from a single consumer. Records lacking a
    required field are skipped and tallied in ``stats.skipped``.
    """

    def __init__(self, stream: BinaryIO, chunk_size: int = CHUNK_SIZE):
        self._stream = stream
        self._chunk_size = chunk_size
        self.stats = ParseStats()
        self._stack: list[str] = []
        self._buf: Optional[list[str]] = None
        self._page: dict = {}
        self._rev: Optional[dict] = None
        self._contrib: Optional[dict] = None
        self._ready: list[RevisionRecord] = []
        self._parser = None

    def __iter__(self) -> Iterator[RevisionRecord]:
        parser = expat.ParserCreate()
        parser.StartElementHandler = self._start
        parser.EndElementHandler = self._end
        parser.CharacterDataHandler = self._chars
        self._parser = parser
        read = self._stream.read
        while True:
            chunk = read(self._chunk_size)
            final = not chunk
            try:
                parser.Parse(chunk, final)
            except expat.ExpatError as exc:
                raise MalformedXml(expat.errors.messages[exc.code], parser.CurrentByteIndex) from None
            if self._ready:
                ready, self._ready = self._ready, []
                yield from ready
            if final:
                break
        if self._stack:
            raise MalformedXml("unexpected end of document", parser.CurrentByteIndex)

    def _fail(self, message):
        raise MalformedXml(message, self._parser.CurrentByteIndex)

    def _start(self, name, attrs):
        parent = self._stack[-1] if self._stack else None
        self._stack.append(name)
        if name == "page":
            if parent == "page" or self._rev is not None:
                self._fail("nested <page>")
            self._page = {}
        elif name == "revision":
            if parent != "page":
                self._fail("<revision> outside <page>")
            self._rev = {}
        elif name == "contributor" and parent == "revision":
            self._contrib = {}
        elif (
            (parent == "page" and name in _PAGE_FIELDS)
            or (parent == "revision" and name in _REVISION_FIELDS)
            or (parent == "contributor" and self._contrib is not None and name in _CONTRIBUTOR_FIELDS)
        ):
            self._buf = []

    def _chars(self, data):
        # text payload (and anything else uncaptured) is dropped here
        if self._buf is not None:
            self._buf.append(data)

    def _end(self, name):
        self._stack.pop()
        parent = self._stack[-1] if self._stack else None
        if self._buf is not None:
            value = "".join(self._buf)
            self._buf = None
            if parent == "page":
                self._page[name] = value
            elif parent == "revision" and self._rev is not None:
                self._rev[name] = value
            elif parent == "contributor" and self._contrib is not None:
                self._contrib[name] = value
            return
        if name == "contributor" and parent == "revision" and self._rev is not None:
            self._rev["contributor"] = self._contrib
            self._contrib = None
        elif name == "revision":
            record = self._build(self._rev)
            self._rev = None
            if record is not None:
                self.stats.records += 1
                self._ready.append(record)
        elif name == "page":
            self._page = {}

    def _build(self, rev: dict) -> Optional[RevisionRecord]:
        skipped = self.stats.skipped
        if not rev.get("id", "").strip():
            skipped["missing_revision_id"] += 1
            return None
        try:
            revision_id = int(rev["id"])
            page_id = int(self._page["id"])
            parent = rev.get("parentid", "").strip()
            parent_id = int(parent) if parent else None
        except KeyError:
            skipped["missing_page_id"] += 1
            return None
        except ValueError:
            skipped["bad_integer"] += 1
            return None
        if revision_id < 0 or page_id < 0 or (parent_id is not None and parent_id < 0):
            skipped["bad_integer"] += 1
            return None
        if "title" not in self._page:
            skipped["missing_title"] += 1
            return None
        try:
            timestamp = parse_timestamp(rev["timestamp"])
        except KeyError:
            skipped["missing_timestamp"] += 1
            return None
        except ValueError:
            skipped["bad_timestamp"] += 1
            return None
        contributor = _build_contributor(rev.get("contributor"))
        if contributor is None:
            skipped["bad_contributor"] += 1
            return None
        return RevisionRecord(
            page_title=self._page["title"],
            page_id=page_id,
            revision_id=revision_id,
            parent_id=parent_id,
            timestamp=timestamp,
            contributor=contributor,
            comment=rev.get("comment", ""),
        )


def _build_contributor(raw: Optional[dict]) -> Optional[Contributor]:
    if not raw:
        return None
    try:
        if "username" in raw:
            uid = raw.get("id", "").strip()
            return Contributor.named(raw["username"], int(uid) if uid else None)
        if "ip" in raw:
            return Contributor.anonymous(raw["ip"].strip())
    except ValueError:
        return None
    return None


def parse_dump(stream: BinaryIO, chunk_size: int = CHUNK_SIZE) -> DumpReader:
    """Return a lazy reader over the revisions of a dump.

    Iterate the result to get records; inspect ``.stats`` afterwards for
    counts of records produced and skipped.
    """
    return DumpReader(stream, chunk_size)


def _x(text: str) -> str:
    return escape(text)


def write_dump(records: Iterable[RevisionRecord], out: BinaryIO, text=None) -> int:
    """Serialize records as a dump document; returns the number written.

    Consecutive records of the same page share one ``<page>`` element.
    ``text`` optionally maps a record to the payload put in ``<text>``.
    """
    w = io.TextIOWrapper(out, encoding="utf-8", newline="\n", write_through=False)
    w.write("<mediawiki>\n")
    current = None
    n = 0
    for r in records:
        key = (r.page_title, r.page_id)
        if key != current:
            if current is not None:
                w.write("  </page>\n")
            w.write(f"  <page>\n    <title>{_x(r.page_title)}</title>\n    <ns>0</ns>\n    <id>{r.page_id}</id>\n")
            current = key
        w.write(f"    <revision>\n      <id>{r.revision_id}</id>\n")
        if r.parent_id is not None:
            w.write(f"      <parentid>{r.parent_id}</parentid>\n")
        w.write(f"      <timestamp>{format_timestamp(r.timestamp)}</timestamp>\n      <contributor>\n")
        c = r.contributor
        if c.is_anonymous:
            w.write(f"        <ip>{c.ip}</ip>\n")
        else:
            w.write(f"        <username>{_x(c.username)}</username>\n")
            if c.user_id is not None:
                w.write(f"        <id>{c.user_id}</id>\n")
        w.write("      </contributor>\n")
        w.write(f"      <comment>{_x(r.comment)}</comment>\n")
        w.write("      <model>wikibase-item</model>\n      <format>application/json</format>\n")
        payload = _x(text(r)) if text is not None else ""
        w.write(f'      <text xml:space="preserve">{payload}</text>\n    </revision>\n')
        n += 1
    if current is not None:
        w.write("  </page>\n")
    w.write("</mediawiki>\n")
    w.flush()
    w.detach()
    return n


# --------------------------------------------------------------------------
# CSV side files


def _csv_rows(stream: BinaryIO, expected: list[str]):
    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(text)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != expected:
        raise BadHeader(f"expected header {','.join(expected)}, got {header!r}")
    return reader


def parse_meta(stream: BinaryIO) -> ParsedTable:
    """Read the meta CSV into ``{revision_id: (GeoMeta, tags)}``.

    Empty cells become missing fields; rows with the wrong number of
    columns or a non-integer id are skipped and counted.
    """
    table = ParsedTable()
    for row in _csv_rows(stream, META_HEADER):
        if len(row) != len(META_HEADER):
            table.skipped += 1
            continue
        try:
            rev_id = int(row[0])
        except ValueError:
            table.skipped += 1
            continue
        geo = GeoMeta(*[cell if cell != "" else None for cell in row[1:7]])
        tags = tuple(t for t in row[7].split("|") if t)
        table[rev_id] = (geo, tags)
    return table


def parse_labels(stream: BinaryIO) -> ParsedTable:
    """Read the label CSV into ``{revision_id: rolled_back}``."""
    table = ParsedTable()
    for row in _csv_rows(stream, LABEL_HEADER):
        if len(row) != 2:
            table.skipped += 1
            continue
        try:
            rev_id = int(row[0])
        except ValueError:
            table.skipped += 1
            continue
        table[rev_id] = row[1].strip().lower() == "true"
    return table


def write_meta(records: Iterable[RevisionRecord], out: BinaryIO) -> int:
    """Write a meta row for every record carrying geo data or tags."""
    w = io.TextIOWrapper(out, encoding="utf-8", newline="")
    writer = csv.writer(w, lineterminator="\n")
    writer.writerow(META_HEADER)
    n = 0
    for r in records:
        if r.geo is None and not r.tags:
            continue
        geo = r.geo or GeoMeta()
        cells = [getattr(geo, name) or "" for name in GEO_FIELDS]
        writer.writerow([r.revision_id, *cells, "|".join(r.tags)])
        n += 1
    w.flush()
    w.detach()
    return n


def write_labels(records: Iterable[RevisionRecord], out: BinaryIO) -> int:
    w = io.TextIOWrapper(out, encoding="utf-8", newline="")
    w.write(",".join(LABEL_HEADER) + "\n")
    n = 0
    for r in records:
        if r.label is None:
            continue
        w.write(f"{r.revision_id},{'true' if r.label else 'false'}\n")
        n += 1
    w.flush()
    w.detach()
    return n


def join(revisions: Iterable[RevisionRecord], meta_map, label_map) -> Iterator[RevisionRecord]:
    """Attach geo/tags and labels by revision id; order and count are preserved."""
    for r in revisions:
        changes = {}
        meta = meta_map.get(r.revision_id)
        if meta is not None:
            geo, tags = meta
            changes["geo"] = None if geo is None or geo.is_empty() else geo
            changes["tags"] = tuple(tags)
        label = label_map.get(r.revision_id)
        if label is not None:
            changes["label"] = label
        yield dataclasses.replace(r, **changes) if changes else r
