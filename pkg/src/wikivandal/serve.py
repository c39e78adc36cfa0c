"""Real-time scoring over TCP.

Wire format, client to server: frames of a 4-byte big-endian length
followed by that many bytes of UTF-8 payload (at most 16 MiB). Each payload
is one record in the canonical ``key<TAB>value`` text form produced by
:func:`encode_record`.

Server to client: one line per frame, in the order frames arrived on that
connection: ``<revision_id>\\t<score>\\n`` with six fractional digits, or
``<revision_id or 0>\\tERROR\\n`` when the frame could not be scored.
"""

from __future__ import annotations

import logging
import signal
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .corpus import (
    GEO_FIELDS,
    Contributor,
    ContributorKind,
    GeoMeta,
    RevisionRecord,
    format_timestamp,
    parse_timestamp,
)
from .errors import BadField, BindFailure, ConnectionLost, DataError, MissingRevisionId
from .features import extract_all
from .learner.model import LinearModel, format_score, predict_matrix
from .vectorizer import check_bits, hash_matrix

log = logging.getLogger(__name__)

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024
DEFAULT_WINDOW = 16

# --------------------------------------------------------------------------
# canonical record text

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _escape(value: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in value)


def _unescape(value: str) -> str:
    if "\\" not in value:
        return value
    out, it = [], iter(value)
    for ch in it:
        if ch == "\\":
            nxt = next(it, None)
            if nxt not in _UNESCAPES:
                raise BadField(f"bad escape sequence in {value!r}")
            out.append(_UNESCAPES[nxt])
        else:
            out.append(ch)
    return "".join(out)


def encode_record(record: RevisionRecord) -> bytes:
    """Canonical text form: populated fields as sorted ``key<TAB>value`` lines."""
    pairs = {
        "page_title": record.page_title,
        "page_id": str(record.page_id),
        "revision_id": str(record.revision_id),
        "timestamp": format_timestamp(record.timestamp),
        "contributor.kind": record.contributor.kind.value,
    }
    c = record.contributor
    if c.is_anonymous:
        pairs["contributor.ip"] = c.ip
    else:
        pairs["contributor.username"] = c.username
        if c.user_id is not None:
            pairs["contributor.user_id"] = str(c.user_id)
    if record.comment:
        pairs["comment"] = record.comment
    if record.parent_id is not None:
        pairs["parent_id"] = str(record.parent_id)
    for i, tag in enumerate(record.tags):
        pairs[f"tags.{i}"] = tag
    if record.geo is not None:
        items = record.geo.items()
        if not items:
            pairs["geo"] = ""
        for name, value in items:
            pairs[f"geo.{name}"] = value
    if record.label is not None:
        pairs["label"] = "true" if record.label else "false"
    return "".join(f"{k}\t{_escape(pairs[k])}\n" for k in sorted(pairs)).encode("utf-8")


def _int(fields: dict, key: str, required=True) -> Optional[int]:
    if key not in fields:
        if required:
            raise BadField(f"missing field {key}")
        return None
    try:
        value = int(fields[key])
    except ValueError:
        raise BadField(f"{key} is not an integer: {fields[key]!r}") from None
    if value < 0 and key != "contributor.user_id":
        raise BadField(f"{key} must be non-negative")
    return value


def _fields(payload: bytes) -> dict:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise BadField(f"payload is not UTF-8: {exc}") from None
    fields = {}
    for line in text.split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise BadField(f"line without a tab: {line!r}")
        if key in fields:
            raise BadField(f"duplicate field {key}")
        fields[key] = _unescape(value)
    return fields


_SIMPLE_KEYS = {
    "comment", "contributor.ip", "contributor.kind", "contributor.user_id", "contributor.username",
    "geo", "label", "page_id", "page_title", "parent_id", "revision_id", "timestamp",
}


def decode_record(payload: bytes) -> RevisionRecord:
    fields = _fields(payload)
    if "revision_id" not in fields:
        raise MissingRevisionId("payload has no revision_id")
    revision_id = _int(fields, "revision_id")
    tags: dict[int, str] = {}
    geo_values: dict[str, str] = {}
    for key, value in fields.items():
        if key in _SIMPLE_KEYS:
            continue
        head, _, tail = key.partition(".")
        if head == "tags" and tail.isdigit():
            tags[int(tail)] = value
        elif head == "geo" and tail in GEO_FIELDS:
            geo_values[tail] = value
        else:
            raise BadField(f"unknown field {key}")
    if sorted(tags) != list(range(len(tags))):
        raise BadField("tag indices must be contiguous from 0")
    try:
        kind = ContributorKind(fields.get("contributor.kind"))
        if kind is ContributorKind.ANONYMOUS:
            contributor = Contributor.anonymous(fields.get("contributor.ip"))
        else:
            contributor = Contributor.named(fields.get("contributor.username"), _int(fields, "contributor.user_id", False))
    except ValueError as exc:
        raise BadField(f"bad contributor: {exc}") from None
    if "page_title" not in fields:
        raise BadField("missing field page_title")
    try:
        timestamp = parse_timestamp(fields["timestamp"])
    except KeyError:
        raise BadField("missing field timestamp") from None
    except ValueError:
        raise BadField(f"bad timestamp {fields['timestamp']!r}") from None
    label = fields.get("label")
    if label not in (None, "true", "false"):
        raise BadField(f"bad label {label!r}")
    geo = GeoMeta(**geo_values) if geo_values or "geo" in fields else None
    return RevisionRecord(
        page_title=fields["page_title"],
        page_id=_int(fields, "page_id"),
        revision_id=revision_id,
        parent_id=_int(fields, "parent_id", False),
        timestamp=timestamp,
        contributor=contributor,
        comment=fields.get("comment", ""),
        tags=tuple(tags[i] for i in range(len(tags))),
        geo=geo,
        label=None if label is None else label == "true",
    )


def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_FRAME}")
    return HEADER.pack(len(payload)) + payload


# --------------------------------------------------------------------------
# scoring


class Scorer:
    """Feature extraction + hashing + linear scoring shared by batch and server paths."""

    def __init__(self, model: LinearModel, bits: int):
        bits = check_bits(bits)
        if model.bits is not None and model.bits != bits:
            raise ValueError(f"model was trained with {model.bits} bits, not {bits}")
        if model.dim != 1 << bits:
            raise ValueError(f"model dim {model.dim} does not match 2**{bits}")
        self.model = model
        self.bits = bits

    def scores(self, records: Sequence[RevisionRecord]) -> list[float]:
        if not records:
            return []
        X = hash_matrix((extract_all(r) for r in records), self.bits)
        return predict_matrix(self.model, X).tolist()

    def score_lines(self, records: Sequence[RevisionRecord]) -> list[str]:
        """Batch output in the exact text form the server sends."""
        return [f"{r.revision_id}\t{format_score(s)}" for r, s in zip(records, self.scores(records))]

    def respond(self, payload: bytes) -> bytes:
        try:
            record = decode_record(payload)
            score = self.scores([record])[0]
        except DataError as exc:
            log.info("unscorable frame: %s", exc)
            return f"{_salvage_id(payload)}\tERROR\n".encode("ascii")
        return f"{record.revision_id}\t{format_score(score)}\n".encode("ascii")


def _salvage_id(payload: bytes) -> int:
    for line in payload.split(b"\n"):
        if line.startswith(b"revision_id\t"):
            try:
                return max(0, int(line.split(b"\t", 1)[1]))
            except ValueError:
                return 0
    return 0


# --------------------------------------------------------------------------
# server


class _FrameReader:
    """Reads exact-length chunks from a socket with a timeout, keeping partial data."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = bytearray()

    def read_exact(self, n: int, stopping: threading.Event) -> Optional[bytes]:
        while len(self.buf) < n:
            try:
                chunk = self.sock.recv(max(65536, n - len(self.buf)))
            except socket.timeout:
                if stopping.is_set() and not self.buf:
                    return None
                continue
            if not chunk:
                return None
            self.buf += chunk
        out = bytes(self.buf[:n])
        del self.buf[:n]
        return out


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: _TCPServer = self.server
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(0.25)
        reader = _FrameReader(sock)
        while True:
            head = reader.read_exact(HEADER.size, server.stopping)
            if head is None:
                return
            (length,) = HEADER.unpack(head)
            if length > MAX_FRAME:
                log.warning("oversized frame (%d bytes); closing connection", length)
                sock.sendall(b"0\tERROR\n")
                return
            payload = reader.read_exact(length, server.stopping) if length else b""
            if payload is None:
                return
            sock.sendall(server.scorer.respond(payload))


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = False
    block_on_close = True

    def __init__(self, address, scorer: Scorer):
        self.scorer = scorer
        self.stopping = threading.Event()
        super().__init__(address, _Handler)


def parse_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


class ScoringServer:
    """Threaded scoring server; one thread per connection, frames handled in order."""

    def __init__(self, model: LinearModel, bits: int, address=("127.0.0.1", 0)):
        if isinstance(address, str):
            address = parse_address(address)
        scorer = Scorer(model, bits)
        try:
            self._server = _TCPServer(address, scorer)
        except OSError as exc:
            raise BindFailure(f"cannot listen on {address[0]}:{address[1]}: {exc}") from exc
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def serve_forever(self):
        try:
            self._server.serve_forever(poll_interval=0.1)
        finally:
            self._server.stopping.set()
            self._server.server_close()

    def start(self) -> "ScoringServer":
        self._thread = threading.Thread(target=self.serve_forever, name="scoring-server", daemon=True)
        self._thread.start()
        return self

    def shutdown(self):
        """Stop accepting, let open connections finish their current frames, then close."""
        self._server.stopping.set()
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def serve(model: LinearModel, vectorizer_bits: int, listen_address, ready=None) -> None:
    """Run the scoring server in the foreground until SIGTERM or SIGINT."""
    server = ScoringServer(model, vectorizer_bits, listen_address)

    def stop(signum, _frame):
        log.info("signal %d: shutting down", signum)
        threading.Thread(target=server.shutdown, daemon=True).start()

    previous = {sig: signal.signal(sig, stop) for sig in (signal.SIGTERM, signal.SIGINT)}
    try:
        host, port = server.address
        log.info("listening on %s:%d", host, port)
        if ready is not None:
            ready(server.address)
        server.serve_forever()
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)


# --------------------------------------------------------------------------
# client


@dataclass(frozen=True)
class ScoreLine:
    revision_id: int
    score: str

    @property
    def ok(self) -> bool:
        return self.score != "ERROR"

    @property
    def value(self) -> Optional[float]:
        return float(self.score) if self.ok else None

    def __str__(self):
        return f"{self.revision_id}\t{self.score}"


def _parse_line(line: bytes) -> ScoreLine:
    rev, _, score = line.rstrip(b"\n").decode("ascii").partition("\t")
    return ScoreLine(int(rev), score)


def stream_client(address, records: Iterable[RevisionRecord], window: int = DEFAULT_WINDOW,
                  timeout: float = 30.0) -> list[ScoreLine]:
    """Send records with at most ``window`` unanswered frames; return replies in send order.

    Raises :class:`ConnectionLost` carrying the replies received so far if
    the server goes away before answering everything.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if isinstance(address, str):
        address = parse_address(address)
    results: list[ScoreLine] = []
    in_flight = 0
    try:
        sock = socket.create_connection(address, timeout=timeout)
    except OSError as exc:
        raise ConnectionLost(f"cannot connect to {address[0]}:{address[1]}: {exc}", results) from exc
    with sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        replies = sock.makefile("rb")

        def receive():
            line = replies.readline()
            if not line.endswith(b"\n"):
                raise ConnectionLost("server closed the connection", results)
            results.append(_parse_line(line))

        try:
            for record in records:
                while in_flight >= window:
                    receive()
                    in_flight -= 1
                sock.sendall(frame(encode_record(record)))
                in_flight += 1
            while in_flight:
                receive()
                in_flight -= 1
        except OSError as exc:
            raise ConnectionLost(f"connection lost: {exc}", results) from exc
    return results
