"""Domain expiry lookups over the WHOIS protocol.

Every response goes through a write-through on-disk cache. In offline mode
only the cache is consulted and misses come back with status Unknown.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

from filelock import FileLock

from .rpsl import DomainName, percent

log = logging.getLogger(__name__)

WHOIS_PORT = 43
EXPIRING_SOON = timedelta(days=7)
MIN_YEAR, MAX_YEAR = 1985, 2200

DEFAULT_SERVERS = {
    "com": "whois.verisign-grs.com",
    "net": "whois.verisign-grs.com",
    "org": "whois.pir.org",
    "info": "whois.afilias.net",
    "biz": "whois.nic.biz",
    "eu": "whois.eu",
    "ru": "whois.tcinet.ru",
    "su": "whois.tcinet.ru",
    "ua": "whois.ua",
    "it": "whois.nic.it",
    "de": "whois.denic.de",
    "uk": "whois.nic.uk",
    "nl": "whois.domain-registry.nl",
    "fr": "whois.nic.fr",
    "pl": "whois.dns.pl",
    "cz": "whois.nic.cz",
    "at": "whois.nic.at",
    "ch": "whois.nic.ch",
    "se": "whois.iis.se",
    "no": "whois.norid.no",
    "dk": "whois.dk-hostmaster.dk",
    "fi": "whois.fi",
    "be": "whois.dns.be",
    "es": "whois.nic.es",
    "tr": "whois.nic.tr",
    "il": "whois.isoc.org.il",
    "kz": "whois.nic.kz",
    "by": "whois.cctld.by",
    "lv": "whois.nic.lv",
    "lt": "whois.domreg.lt",
    "ee": "whois.tld.ee",
    "ro": "whois.rotld.ro",
    "bg": "whois.register.bg",
    "gr": "whois.ripe.net",
    "hu": "whois.nic.hu",
    "sk": "whois.sk-nic.sk",
    "si": "whois.register.si",
    "hr": "whois.dns.hr",
    "rs": "whois.rnids.rs",
    "md": "whois.nic.md",
    "am": "whois.amnic.net",
    "ge": "whois.nic.ge",
    "ir": "whois.nic.ir",
    "pt": "whois.dns.pt",
    "ie": "whois.weare.ie",
    "lu": "whois.dns.lu",
    "is": "whois.isnic.is",
    "cy": "whois.ripe.net",
    "io": "whois.nic.io",
    "me": "whois.nic.me",
}


class DomainStatus(str, enum.Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    EXPIRING_SOON = "ExpiringSoon"
    UNREGISTERED = "Unregistered"
    UNKNOWN = "Unknown"

    @property
    def is_expired(self) -> bool:
        """Expired for hijackability purposes; an unregistered name is immediately registrable."""
        return self in (DomainStatus.EXPIRED, DomainStatus.UNREGISTERED)


class WhoisError(Exception):
    pass


class UnknownServerError(WhoisError):
    pass


class CacheMissError(WhoisError):
    pass


class TransientWhoisError(WhoisError):
    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class RateLimitedError(TransientWhoisError):
    pass


class ExpiryParseError(WhoisError):
    def __init__(self, message: str, line: str):
        super().__init__(f"{message}: {line!r}")
        self.line = line


class _Unregistered(enum.Enum):
    UNREGISTERED = "unregistered"

    def __repr__(self) -> str:
        return "UNREGISTERED"


# parse_expiry result for explicit "no such domain" responses
UNREGISTERED = _Unregistered.UNREGISTERED


@dataclass(frozen=True)
class WhoisResponse:
    server: str
    body: bytes
    referral: str | None = None

    @property
    def text(self) -> str:
        return self.body.decode("utf-8", errors="replace")


@dataclass
class DomainRecord:
    domain: DomainName
    status: DomainStatus
    expiry_date: date | None = None
    queried_at: datetime | None = None
    raw_source: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "domain": self.domain.name,
            "status": self.status.value,
            "expiry_date": self.expiry_date.isoformat() if self.expiry_date else None,
            "queried_at": _iso(self.queried_at),
            "raw_source": self.raw_source,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DomainRecord":
        return cls(
            domain=DomainName(data["domain"]),
            status=DomainStatus(data["status"]),
            expiry_date=date.fromisoformat(data["expiry_date"]) if data.get("expiry_date") else None,
            queried_at=datetime.fromisoformat(data["queried_at"].replace("Z", "+00:00"))
            if data.get("queried_at") else None,
            raw_source=data.get("raw_source"),
            error=data.get("error"),
        )


def _iso(dt: datetime | None) -> str | None:
    if dt is None:
        return None
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --- expiry parsing ---------------------------------------------------------------

EXPIRY_LABELS = (
    "registry expiry date",
    "registrar registration expiration date",
    "expiration date",
    "expiry date",
    "expire date",
    "paid-till",
    "expires on",
    "expiration time",
    "expire",
    "expires",
    "renewal date",
    "valid until",
)

UNREGISTERED_MARKERS = (
    "no match",
    "not found",
    "no entries found",
    "no data found",
    "no object found",
    "status: available",
    "status: free",
    "domain not found",
)

_MONTHS = {m: i for i, m in enumerate(
    ("jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"), 1)}

# name -> (regex, group order as year/month/day indices)
DATE_FORMATS = {
    "iso": (re.compile(r"(\d{4})-(\d{1,2})-(\d{1,2})"), (0, 1, 2)),
    "ymd-dot": (re.compile(r"(\d{4})\.(\d{1,2})\.(\d{1,2})"), (0, 1, 2)),
    "ymd-slash": (re.compile(r"(\d{4})/(\d{1,2})/(\d{1,2})"), (0, 1, 2)),
    "dmy-dot": (re.compile(r"(\d{1,2})\.(\d{1,2})\.(\d{4})"), (2, 1, 0)),
    "dmy-mon": (re.compile(r"(\d{1,2})[- ]([A-Za-z]{3})[a-z]*[- ](\d{4})"), (2, 1, 0)),
    "compact": (re.compile(r"\b(\d{4})(\d{2})(\d{2})\b"), (0, 1, 2)),
}
DEFAULT_DATE_FORMATS = ("iso", "ymd-dot", "ymd-slash", "dmy-dot", "dmy-mon")
TLD_DATE_FORMATS = {
    "ru": ("ymd-dot", "iso"),
    "su": ("ymd-dot", "iso"),
    "uk": ("dmy-mon", "iso"),
    "pl": ("ymd-dot", "iso"),
    "cz": ("dmy-dot", "iso"),
    "sk": ("iso", "dmy-dot"),
    "lv": ("iso", "dmy-dot"),
    "tr": ("iso", "dmy-mon", "ymd-dot"),
    "fi": ("dmy-dot", "iso"),
    "ro": ("iso", "compact"),
}


def _parse_date(value: str, formats: Iterable[str], line: str) -> date | None:
    for name in formats:
        rx, order = DATE_FORMATS[name]
        m = rx.search(value)
        if not m:
            continue
        parts = m.groups()
        y, mo, d = (parts[i] for i in order)
        try:
            month = int(mo) if mo.isdigit() else _MONTHS[mo[:3].lower()]
            result = date(int(y), month, int(d))
        except (KeyError, ValueError):
            continue
        if not MIN_YEAR <= result.year <= MAX_YEAR:
            raise ExpiryParseError(f"expiry year {result.year} outside {MIN_YEAR}-{MAX_YEAR}", line)
        return result
    return None


def parse_expiry(response: WhoisResponse | str | bytes, tld: str):
    """Expiry date of a WHOIS response body.

    Returns a ``date``, ``None`` when no expiry line exists, or
    :data:`UNREGISTERED` for explicit "no such domain" answers. An expiry line
    whose date cannot be read raises :class:`ExpiryParseError`.
    """
    if isinstance(response, WhoisResponse):
        text = response.text
    elif isinstance(response, bytes):
        text = response.decode("utf-8", errors="replace")
    else:
        text = response
    if not text.strip():
        return None
    lines = [ln.strip() for ln in text.splitlines()]
    lowered = [ln.lower() for ln in lines]
    formats = TLD_DATE_FORMATS.get(tld.lower(), DEFAULT_DATE_FORMATS)
    for label in EXPIRY_LABELS:
        for line, low in zip(lines, lowered):
            if not low.startswith(label):
                continue
            rest = line[len(label):].lstrip()
            if not rest.startswith(":"):
                continue
            value = rest[1:].strip()
            if not value:
                continue
            found = _parse_date(value, formats, line)
            if found is None:
                # try every known layout before giving up
                found = _parse_date(value, DATE_FORMATS, line)
            if found is None:
                raise ExpiryParseError("unparseable expiry date", line)
            return found
    for low in lowered:
        body = low.lstrip("%#> ").strip()
        if any(body.startswith(marker) for marker in UNREGISTERED_MARKERS):
            return UNREGISTERED
    return None


def classify_domain(expiry_date: date | None, epoch: date, *, unregistered: bool = False,
                    soon: timedelta = EXPIRING_SOON) -> DomainStatus:
    if unregistered:
        return DomainStatus.UNREGISTERED
    if expiry_date is None:
        return DomainStatus.UNKNOWN
    if expiry_date < epoch:
        return DomainStatus.EXPIRED
    if expiry_date <= epoch + soon:
        return DomainStatus.EXPIRING_SOON
    return DomainStatus.VALID


# --- cache ------------------------------------------------------------------------

class CacheEntry(NamedTuple):
    domain: str
    day: date
    server: str
    digest: str
    referral: str | None


class WhoisCache:
    """Write-through response cache.

    Layout under the cache directory::

        index.tsv                       domain, query date, server, sha256, referral
        objects/<sha[:2]>/<sha>.whois   raw response body, content-addressed

    Index lines are appended; the last line for a (domain, date) pair wins.
    """

    INDEX = "index.tsv"

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._index_path = self.directory / self.INDEX
        self._lock = threading.RLock()
        self._file_lock = FileLock(str(self.directory / ".index.lock"))
        self._entries: dict[str, dict[date, CacheEntry]] = {}
        self._loaded_mtime: float | None = None

    def _object_path(self, digest: str) -> Path:
        return self.directory / "objects" / digest[:2] / f"{digest}.whois"

    def _reload(self) -> None:
        try:
            mtime = self._index_path.stat().st_mtime_ns
        except FileNotFoundError:
            return
        if mtime == self._loaded_mtime:
            return
        entries: dict[str, dict[date, CacheEntry]] = {}
        with open(self._index_path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 5:
                    continue
                domain, day, server, digest, referral = parts
                entry = CacheEntry(domain, date.fromisoformat(day), server, digest, referral or None)
                entries.setdefault(domain, {})[entry.day] = entry
        self._entries = entries
        self._loaded_mtime = mtime

    def entries(self, domain: str) -> list[CacheEntry]:
        with self._lock:
            self._reload()
            return sorted(self._entries.get(domain, {}).values(), key=lambda e: e.day)

    def get(self, domain: str, day: date | None = None) -> tuple[WhoisResponse, CacheEntry] | None:
        """Cached response for ``domain`` on ``day``, or the newest one if no day is given."""
        found = self.entries(domain)
        if day is not None:
            found = [e for e in found if e.day == day]
        if not found:
            return None
        entry = found[-1]
        body = self._object_path(entry.digest).read_bytes()
        return WhoisResponse(entry.server, body, entry.referral), entry

    def put(self, domain: str, day: date, response: WhoisResponse) -> CacheEntry:
        digest = hashlib.sha256(response.body).hexdigest()
        entry = CacheEntry(domain, day, response.server, digest, response.referral)
        with self._lock, self._file_lock:
            path = self._object_path(digest)
            if not path.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(response.body)
                os.replace(tmp, path)
            with open(self._index_path, "a", encoding="utf-8") as fh:
                fh.write("\t".join([domain, day.isoformat(), response.server, digest,
                                    response.referral or ""]) + "\n")
            self._reload()
            self._entries.setdefault(domain, {})[day] = entry
        return entry

    def source_ref(self, entry: CacheEntry) -> str:
        return f"objects/{entry.digest[:2]}/{entry.digest}.whois"


# --- client -------------------------------------------------------------------------

class RateLimiter:
    """At most ``max_qps`` queries per second per server.

    Slots are reserved under a lock and waited for outside it, so concurrent
    callers for one server are serialized while distinct servers proceed
    independently.
    """

    def __init__(self, max_qps: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if max_qps <= 0:
            raise ValueError("max_qps must be positive")
        self.interval = 1.0 / max_qps
        self.clock = clock
        self.sleep = sleep
        self._next: dict[str, float] = {}
        self._lock = threading.Lock()

    def acquire(self, server: str) -> float:
        with self._lock:
            now = self.clock()
            slot = max(now, self._next.get(server, now))
            self._next[server] = slot + self.interval
        if slot > now:
            self.sleep(slot - now)
        return slot


Transport = Callable[[str, int, bytes, float], bytes]


def tcp_transport(host: str, port: int, query: bytes, timeout: float) -> bytes:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.sendall(query)
        chunks = []
        while True:
            data = sock.recv(4096)
            if not data:
                break
            chunks.append(data)
    return b"".join(chunks)


_REFERRAL_RE = re.compile(rb"^\s*Registrar WHOIS Server:\s*(\S+)\s*$", re.I | re.M)
_RATE_LIMIT_RE = re.compile(
    rb"(rate limit|limit exceeded|too many (requests|queries|connections)|query limit|"
    rb"try again later|quota exceeded)", re.I)


def referral_of(body: bytes) -> str | None:
    m = _REFERRAL_RE.search(body)
    if not m:
        return None
    host = m.group(1).decode("ascii", errors="replace").lower()
    for prefix in ("whois://", "rwhois://", "http://", "https://"):
        if host.startswith(prefix):
            host = host[len(prefix):]
    host = host.split("/", 1)[0].split(":", 1)[0]
    return host or None


@dataclass
class WhoisConfig:
    servers: dict[str, str] = field(default_factory=dict)
    max_qps: float = 0.5
    offline: bool = False
    timeout: float = 10.0
    max_retries: int = 5
    backoff: float = 2.0
    max_referrals: int = 2
    port: int = WHOIS_PORT

    def server_for(self, tld: str) -> str | None:
        return self.servers.get(tld) or DEFAULT_SERVERS.get(tld)


class WhoisClient:
    def __init__(self, config: WhoisConfig, cache: WhoisCache, *,
                 transport: Transport = tcp_transport,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep,
                 today: Callable[[], date] = lambda: datetime.now(timezone.utc).date()):
        self.config = config
        self.cache = cache
        self.transport = transport
        self.sleep = sleep
        self.today = today
        self.limiter = RateLimiter(config.max_qps, clock, sleep)
        self.stats: Counter = Counter()

    def query(self, domain: DomainName) -> WhoisResponse:
        cached = self.cache.get(domain.name)
        if cached is not None:
            self.stats["cache_hits"] += 1
            return cached[0]
        self.stats["cache_misses"] += 1
        if self.config.offline:
            raise CacheMissError(f"{domain}: not cached (offline)")
        server = self.config.server_for(domain.tld)
        if server is None:
            raise UnknownServerError(f"no WHOIS server known for .{domain.tld}")
        response = self._fetch(server, domain.name)
        seen = {server}
        for _ in range(self.config.max_referrals):
            nxt = referral_of(response.body)
            if nxt is None or nxt in seen:
                break
            seen.add(nxt)
            try:
                final = self._fetch(nxt, domain.name)
            except TransientWhoisError as exc:
                log.warning("referral to %s failed: %s", nxt, exc)
                break
            response = WhoisResponse(final.server, final.body, None)
            self.stats["referrals"] += 1
        self.cache.put(domain.name, self.today(), response)
        return response

    def _fetch(self, server: str, name: str) -> WhoisResponse:
        query = f"{name}\r\n".encode("idna" if not name.isascii() else "ascii")
        retries = 0
        delay = self.config.backoff
        while True:
            self.limiter.acquire(server)
            self.stats["queries"] += 1
            try:
                body = self.transport(server, self.config.port, query, self.config.timeout)
                if _RATE_LIMIT_RE.search(body[:2048]) and not _REFERRAL_RE.search(body):
                    if retries >= self.config.max_retries:
                        raise RateLimitedError(f"{server} rate-limited", retries)
                    self.stats["rate_limited"] += 1
                else:
                    return WhoisResponse(server, body, referral_of(body))
            except (OSError, socket.timeout) as exc:
                if retries >= self.config.max_retries:
                    raise TransientWhoisError(f"{server}: {exc}", retries) from exc
                self.stats["transient_errors"] += 1
            self.sleep(delay)
            delay *= 2
            retries += 1

    def lookup(self, domain: DomainName, epoch: date) -> DomainRecord:
        """Query, parse and classify one domain; failures become Unknown records."""
        try:
            response = self.query(domain)
        except WhoisError as exc:
            self.stats[type(exc).__name__] += 1
            return DomainRecord(domain, DomainStatus.UNKNOWN, error=str(exc))
        entry = self.cache.entries(domain.name)[-1]
        queried_at = datetime.combine(entry.day, datetime.min.time(), timezone.utc)
        source = self.cache.source_ref(entry)
        try:
            expiry = parse_expiry(response, domain.tld)
        except ExpiryParseError as exc:
            self.stats["parse_errors"] += 1
            return DomainRecord(domain, DomainStatus.UNKNOWN, None, queried_at, source, str(exc))
        if expiry is UNREGISTERED:
            return DomainRecord(domain, DomainStatus.UNREGISTERED, None, queried_at, source)
        return DomainRecord(domain, classify_domain(expiry, epoch), expiry, queried_at, source)


# --- reporting ---------------------------------------------------------------------

@dataclass
class ExpiryHistogram:
    by_date: list[tuple[date, int]]
    tlds_all: list[tuple[str, int, Decimal]]
    tlds_expired: list[tuple[str, int, Decimal]]


def _tld_table(counter: Counter) -> list[tuple[str, int, Decimal]]:
    total = sum(counter.values())
    return [(tld, n, percent(n, total))
            for tld, n in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


def expiry_histogram(records: Iterable[DomainRecord]) -> ExpiryHistogram:
    by_date: Counter = Counter()
    all_tlds: Counter = Counter()
    expired_tlds: Counter = Counter()
    for r in records:
        all_tlds[r.domain.tld] += 1
        if r.status.is_expired:
            expired_tlds[r.domain.tld] += 1
        if r.expiry_date is not None:
            by_date[r.expiry_date] += 1
    return ExpiryHistogram(sorted(by_date.items()), _tld_table(all_tlds), _tld_table(expired_tlds))


def write_records_jsonl(records: Iterable[DomainRecord], fh) -> None:
    for r in records:
        fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_records_jsonl(fh) -> list[DomainRecord]:
    return [DomainRecord.from_json(json.loads(line)) for line in fh if line.strip()]
