"""Page, user and comment feature extraction.

Every feature is a ``(Family, token)`` pair. Tokens never contain
whitespace, and the family travels with the token all the way to hashing so
the same string in two families lands in two different buckets.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import NamedTuple

from .corpus import RevisionRecord, is_dotted_quad
from .errors import NotAnIp


class Family(enum.Enum):
    TITLE = "Title"
    USER = "User"
    COMMENT_STRUCT = "CommentStruct"
    COMMENT_LINK = "CommentLink"
    COMMENT_TEXT = "CommentText"

    def __str__(self):
        return self.value


FAMILIES = tuple(Family)


class Feature(NamedTuple):
    family: Family
    token: str

    def key(self) -> str:
        return f"{self.family.value}:{self.token}"


FeatureBag = list  # list[Feature], ordered


@dataclass(frozen=True)
class ParsedComment:
    structured: tuple[str, ...] = ()
    links: tuple[str, ...] = ()
    unstructured: tuple[str, ...] = ()


_WS = re.compile(r"\s+")
_LINK = re.compile(r"\[\[(.*?)\]\]", re.S)
_STRUCT_SPLIT = re.compile(r"[:|/*]")
_WORD = re.compile(r"[^\W_]+")


def clean_token(text: str) -> str:
    """Trim and replace inner whitespace runs with ``_``."""
    return _WS.sub("_", text.strip())


def page_features(record: RevisionRecord) -> list[str]:
    token = clean_token(record.page_title)
    return [token] if token else []


def ip_path_features(ip: str) -> list[str]:
    """Prefix tokens of a dotted-quad: ``a``, ``a_b``, ``a_b_c``, ``a_b_c_d``."""
    if not isinstance(ip, str) or not is_dotted_quad(ip):
        raise NotAnIp(f"not a dotted-quad IPv4 address: {ip!r}")
    octets = ip.split(".")
    return ["_".join(octets[: i + 1]) for i in range(4)]


def user_features(record: RevisionRecord) -> list[str]:
    c = record.contributor
    if c.is_anonymous:
        tokens = ["anonymous=true"]
        if record.geo is not None:
            tokens += [f"{name}={clean_token(value)}" for name, value in record.geo.items() if value.strip()]
        tokens += ip_path_features(c.ip)
    else:
        name = clean_token(c.username)
        tokens = [f"username={name}"]
    # revision tags belong to the user family for every kind of contributor
    tokens += [t for t in (clean_token(tag) for tag in record.tags) if t]
    return tokens


def parse_comment(comment: str) -> ParsedComment:
    """Split a revision comment into structured, link and free-text tokens.

    Only the first ``/* ... */`` block is structured. An unterminated ``/*``
    leaves the whole comment as free text.
    """
    if not comment:
        return ParsedComment()
    structured: list[str] = []
    rest = comment
    start = comment.find("/*")
    if start >= 0:
        end = comment.find("*/", start + 2)
        if end >= 0:
            block = comment[start + 2 : end]
            structured = [t for t in (clean_token(p) for p in _STRUCT_SPLIT.split(block)) if t]
            rest = comment[:start] + " " + comment[end + 2 :]
    links = [t for t in (clean_token(m) for m in _LINK.findall(comment)) if t]
    rest = _LINK.sub(" ", rest)
    words = _WORD.findall(rest.lower())
    return ParsedComment(tuple(structured), tuple(links), tuple(words))


def extract_all(record: RevisionRecord) -> list[Feature]:
    """All features of a revision in fixed family order."""
    bag = [Feature(Family.TITLE, t) for t in page_features(record)]
    bag += [Feature(Family.USER, t) for t in user_features(record)]
    parsed = parse_comment(record.comment)
    bag += [Feature(Family.COMMENT_STRUCT, t) for t in parsed.structured]
    bag += [Feature(Family.COMMENT_LINK, t) for t in parsed.links]
    bag += [Feature(Family.COMMENT_TEXT, t) for t in parsed.unstructured]
    return bag


def select_family(bag: list[Feature], family: Family) -> list[Feature]:
    return [f for f in bag if f.family is family]
