"""Registry database snapshot parsing.

Snapshots are RPSL text dumps: paragraphs of ``name: value`` attributes
separated by blank lines. Plain, gzip and bzip2 inputs are accepted.
"""

from __future__ import annotations

import csv
import enum
import gc
import hashlib
import ipaddress
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from decimal import ROUND_HALF_UP, Decimal
from functools import cached_property
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

from ._io import Source, read_all

# Fraction of malformed paragraphs above which a file is flagged.
SKIP_FLAG_FRACTION = 0.01

DOMAIN_ATTRIBUTES = ("notify", "abuse-mailbox")


class ObjectClass(str, enum.Enum):
    INETNUM = "inetnum"
    AUT_NUM = "aut-num"
    MNTNER = "mntner"
    ROUTE = "route"
    DOMAIN = "domain"
    INET6NUM = "inet6num"
    ORGANISATION = "organisation"
    ROLE = "role"
    AS_SET = "as-set"
    ROUTE6 = "route6"
    IRT = "irt"
    OTHER = "other"

    @classmethod
    def lookup(cls, name: str) -> "ObjectClass":
        return _CLASS_BY_NAME.get(name, cls.OTHER)


_CLASS_BY_NAME = {c.value: c for c in ObjectClass if c is not ObjectClass.OTHER}


class AddressRange(NamedTuple):
    """Inclusive IPv4 range as 32-bit integers."""

    start: int
    end: int

    @classmethod
    def parse(cls, text: str) -> "AddressRange":
        """Parse ``a.b.c.d - e.f.g.h`` or CIDR notation."""
        text = text.strip()
        if "-" in text:
            lo, _, hi = text.partition("-")
            start = int(ipaddress.IPv4Address(lo.strip()))
            end = int(ipaddress.IPv4Address(hi.strip()))
        else:
            net = ipaddress.IPv4Network(text, strict=False)
            start, end = int(net.network_address), int(net.broadcast_address)
        if start > end:
            raise ValueError(f"inverted address range: {text!r}")
        return cls(start, end)

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def __str__(self) -> str:
        return f"{ipaddress.IPv4Address(self.start)} - {ipaddress.IPv4Address(self.end)}"


class AsNumber(NamedTuple):
    value: int

    @classmethod
    def parse(cls, text: str) -> "AsNumber":
        text = text.strip()
        if text[:2].upper() != "AS":
            raise ValueError(f"not an AS number: {text!r}")
        body = text[2:]
        if "." in body:
            # asdot notation
            hi, _, lo = body.partition(".")
            value = (int(hi) << 16) | int(lo)
        else:
            value = int(body)
        if not 0 <= value < 1 << 32:
            raise ValueError(f"AS number out of range: {text!r}")
        return cls(value)

    def __str__(self) -> str:
        return f"AS{self.value}"


@dataclass(frozen=True, order=True)
class DomainName:
    """Lowercase DNS name with at least two labels."""

    name: str

    def __post_init__(self):
        name = self.name.lower().rstrip(".")
        labels = name.split(".")
        if len(labels) < 2 or not all(labels):
            raise ValueError(f"invalid domain name: {self.name!r}")
        object.__setattr__(self, "name", name)

    @property
    def labels(self) -> list[str]:
        return self.name.split(".")

    @property
    def tld(self) -> str:
        return self.name.rsplit(".", 1)[1]

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class RpslObject:
    object_class: ObjectClass
    primary_key: str
    attributes: tuple[tuple[str, str], ...]
    snapshot_date: date | None = field(default=None, compare=False)

    @property
    def class_name(self) -> str:
        """The literal class attribute, which differs from ``object_class`` only for OTHER."""
        return self.attributes[0][0]

    @property
    def key(self) -> tuple[str, str]:
        return (self.class_name, self.primary_key)

    @cached_property
    def content_digest(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        for name, value in self.attributes:
            h.update(name.encode())
            h.update(b"\x00")
            h.update(" ".join(value.split()).encode())
            h.update(b"\x01")
        return h.hexdigest()

    def get(self, name: str) -> list[str]:
        return [v for n, v in self.attributes if n == name]

    def first(self, name: str, default: str | None = None) -> str | None:
        for n, v in self.attributes:
            if n == name:
                return v
        return default

    @classmethod
    def from_attributes(cls, attributes: Iterable[tuple[str, str]],
                        snapshot_date: date | None = None) -> "RpslObject":
        attrs = tuple((n.strip().lower(), v.strip()) for n, v in attributes)
        if not attrs:
            raise ValueError("object without attributes")
        return cls(ObjectClass.lookup(attrs[0][0]), " ".join(attrs[0][1].split()), attrs,
                   snapshot_date)


@dataclass
class ParseStats:
    paragraphs: int = 0
    objects: int = 0
    skipped: int = 0

    @property
    def flagged(self) -> bool:
        return self.paragraphs > 0 and self.skipped / self.paragraphs > SKIP_FLAG_FRACTION

    def add(self, other: "ParseStats") -> None:
        self.paragraphs += other.paragraphs
        self.objects += other.objects
        self.skipped += other.skipped


_NAME_RE = re.compile(r"[a-z0-9][a-z0-9_-]*\Z")


_BLANK_RE = re.compile(r"\n(?:[ \t]*\n)+")
# a paragraph of plain single-line attributes with lowercase names; a trailing
# "# ..." is an end-of-line comment
_ATTR_RE = re.compile(r"^([a-z0-9][a-z0-9_-]*):[ \t]*((?:[^ \t\n#]+(?:[ \t]+[^ \t\n#]+)*)?)[^\n]*", re.M)


def _paragraphs(text: str) -> Iterator[str]:
    if "\r" in text:
        text = text.replace("\r\n", "\n").replace("\r", "\n")
    for para in _BLANK_RE.split(text):
        if para[:1] in ("#", "%", " ", "\t", "\n") or "\n#" in para or "\n%" in para:
            lines = [ln for ln in para.split("\n")
                     if ln and not ln.isspace() and ln[0] != "#" and ln[0] != "%"]
            if lines:
                yield "\n".join(lines)
        else:
            para = para.strip("\n")
            if para and not para.isspace():
                yield para


def _build(para: str, snapshot_date: date | None) -> RpslObject | None:
    attrs = _ATTR_RE.findall(para)
    if len(attrs) != para.count("\n") + 1:
        return _build_slow(para.split("\n"), snapshot_date)
    first_value = attrs[0][1]
    if not first_value:
        return None
    return RpslObject(
        _CLASS_BY_NAME.get(attrs[0][0], ObjectClass.OTHER),
        " ".join(first_value.split()),
        tuple(attrs),
        snapshot_date,
    )


def _build_slow(lines: list[str], snapshot_date: date | None) -> RpslObject | None:
    attrs: list[list[str]] = []
    name_ok = _NAME_RE.match
    for line in lines:
        if not line or line.isspace():
            continue
        c = line[0]
        if c == " " or c == "\t" or c == "+":
            if not attrs:
                return None
            piece = line[1:] if c == "+" else line
            if "#" in piece:
                piece = piece[:piece.index("#")]
            piece = piece.strip(" \t")
            if piece:
                last = attrs[-1]
                last[1] = f"{last[1]} {piece}" if last[1] else piece
            continue
        name, sep, value = line.partition(":")
        if not sep:
            return None
        name = name.lower()
        if not name_ok(name):
            return None
        if "#" in value:
            value = value[:value.index("#")]
        attrs.append([name, value.strip(" \t")])
    if not attrs:
        return None
    first_value = attrs[0][1]
    if not first_value:
        return None
    return RpslObject(
        _CLASS_BY_NAME.get(attrs[0][0], ObjectClass.OTHER),
        " ".join(first_value.split()),
        tuple((n, v) for n, v in attrs),
        snapshot_date,
    )


def iter_snapshot(source: Source, snapshot_date: date | None = None,
                  stats: ParseStats | None = None) -> Iterator[RpslObject]:
    """Yield objects from a snapshot dump; malformed paragraphs are skipped and counted."""
    data = read_all(source)
    text = data.decode("utf-8", errors="replace")
    if stats is None:
        stats = ParseStats()
    for para in _paragraphs(text):
        stats.paragraphs += 1
        obj = _build(para, snapshot_date)
        if obj is None:
            stats.skipped += 1
        else:
            stats.objects += 1
            yield obj


def parse_snapshot(source: Source, snapshot_date: date | None = None,
                   stats: ParseStats | None = None) -> list[RpslObject]:
    # the cyclic collector rescans every retained object on each generation-2
    # pass; objects here hold no cycles, so pause it for the bulk build
    enabled = gc.isenabled()
    gc.disable()
    try:
        return list(iter_snapshot(source, snapshot_date, stats))
    finally:
        if enabled:
            gc.enable()


def format_object(obj: RpslObject) -> str:
    width = max(len(n) for n, _ in obj.attributes) + 2
    return "".join(f"{(n + ':').ljust(width)}{v}\n" for n, v in obj.attributes)


def format_snapshot(objects: Iterable[RpslObject]) -> str:
    return "\n".join(format_object(o) for o in objects)


# --- domain extraction -------------------------------------------------------

_EMAIL_RE = re.compile(
    r"(?<![A-Za-z0-9._%+-])"
    r"[A-Za-z0-9._%+!$&'*/=?^`{|}~-]+"
    r"@((?:[A-Za-z0-9](?:[A-Za-z0-9-]{0,61}[A-Za-z0-9])?\.)+"
    r"(?:[A-Za-z]{2,63}|xn--[A-Za-z0-9-]{1,59}))"
    r"(?![A-Za-z0-9-]|\.[A-Za-z0-9])"
)

# Second-level labels under which registrations happen one level deeper.
# Used only when registrable-name reduction is requested.
_SECOND_LEVEL = frozenset({
    "com.ua", "net.ua", "org.ua", "kiev.ua", "co.uk", "org.uk", "ac.uk", "me.uk",
    "com.ru", "net.ru", "org.ru", "msk.ru", "spb.ru", "com.tr", "net.tr", "org.tr",
    "co.il", "org.il", "com.pl", "net.pl", "com.cy", "co.at", "or.at", "com.gr",
    "com.au", "net.au", "co.jp", "ne.jp", "com.br", "co.za", "gov.uk", "com.es",
})


def registrable_domain(name: str) -> str:
    labels = name.split(".")
    keep = 3 if ".".join(labels[-2:]) in _SECOND_LEVEL and len(labels) >= 3 else 2
    return ".".join(labels[-keep:])


def extract_domains(obj: RpslObject, *, registrable: bool = False,
                    counter: Counter | None = None) -> set[DomainName]:
    """DNS names of the email addresses in ``notify`` and ``abuse-mailbox`` values.

    The full host part is used unless ``registrable`` asks for reduction to
    the registered name.
    """
    found: set[DomainName] = set()
    for name, value in obj.attributes:
        if name != "notify" and name != "abuse-mailbox":
            continue
        hosts = _EMAIL_RE.findall(value)
        if not hosts:
            if counter is not None:
                counter["invalid_email_values"] += 1
            continue
        for host in hosts:
            host = host.lower()
            if registrable:
                host = registrable_domain(host)
            found.add(DomainName(host))
    if counter is not None:
        counter["domain_refs"] += len(found)
    return found


# --- statistics ---------------------------------------------------------------

class StatsRow(NamedTuple):
    object_class: str
    total: int
    with_domain_refs: int
    percent: Decimal


def percent(part: int, whole: int) -> Decimal:
    """``part/whole`` in percent, rounded half-up to two decimals."""
    if whole == 0:
        return Decimal("0.00")
    return (Decimal(part) * 100 / Decimal(whole)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def snapshot_stats(objects: Iterable[RpslObject]) -> list[StatsRow]:
    """Per-class totals and domain-referencing counts, largest class first, grand total last."""
    totals: Counter = Counter()
    with_refs: Counter = Counter()
    for obj in objects:
        cls = obj.object_class.value
        totals[cls] += 1
        if extract_domains(obj):
            with_refs[cls] += 1
    rows = [StatsRow(c, n, with_refs[c], percent(with_refs[c], n))
            for c, n in sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))]
    grand, grand_refs = sum(totals.values()), sum(with_refs.values())
    rows.append(StatsRow("total", grand, grand_refs, percent(grand_refs, grand)))
    return rows


STATS_HEADER = ("object_class", "total", "with_domain_refs", "percent")


def write_stats_csv(rows: Sequence[StatsRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STATS_HEADER)
    for row in rows:
        w.writerow((row.object_class, row.total, row.with_domain_refs, f"{row.percent:.2f}"))


# --- resources ------------------------------------------------------------------

def slash24_equivalents(rng: AddressRange) -> int:
    """Number of /24 blocks the range is worth: ``ceil(size / 256)``.

    For /24-aligned ranges this equals the count of distinct /24s touched;
    an unaligned range may touch one more /24 than it is worth.
    """
    return (rng.end - rng.start + 256) // 256


def inetnum_range(obj: RpslObject) -> AddressRange | None:
    try:
        return AddressRange.parse(obj.primary_key)
    except ValueError:
        return None


def aut_num(obj: RpslObject) -> AsNumber | None:
    try:
        return AsNumber.parse(obj.primary_key)
    except ValueError:
        return None


def mnt_by(obj: RpslObject) -> list[str]:
    """Maintainer keys referenced by ``mnt-by`` (comma-separated lists allowed), uppercased."""
    keys = []
    for value in obj.get("mnt-by"):
        for part in value.replace(",", " ").split():
            keys.append(part.upper())
    return keys
