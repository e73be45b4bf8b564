"""Last-seen BGP activity for prefixes and AS numbers."""

from __future__ import annotations

import csv
from bisect import bisect_left, bisect_right
from datetime import datetime, timezone
from typing import IO, Iterable

from .groups import MaintainerGroup
from .mrt import BgpUpdateRecord, Prefix
from .rpsl import AddressRange

OVERLAP = "overlap"
EXACT = "exact"
MATCH_MODES = (OVERLAP, EXACT)


def prefix_overlaps(rng: AddressRange, prefix: Prefix) -> bool:
    return prefix.start <= rng.end and prefix.end >= rng.start


def prefix_within(rng: AddressRange, prefix: Prefix) -> bool:
    """Exact-or-more-specific match: the prefix lies entirely inside the range."""
    return prefix.start >= rng.start and prefix.end <= rng.end


class ActivityIndex:
    """Latest announcement time per prefix and latest path appearance per ASN.

    Updates merge by maximum, so the index does not depend on record order and
    partial indexes built from separate files combine with :meth:`merge`.
    """

    def __init__(self):
        self.prefix_last_seen: dict[Prefix, int] = {}
        self.asn_last_seen: dict[int, int] = {}
        self.window: tuple[int, int] | None = None
        self._by_length: dict[int, list[int]] | None = None

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivityIndex):
            return NotImplemented
        return (self.prefix_last_seen == other.prefix_last_seen
                and self.asn_last_seen == other.asn_last_seen and self.window == other.window)

    def __repr__(self) -> str:
        return (f"ActivityIndex(prefixes={len(self.prefix_last_seen)}, "
                f"asns={len(self.asn_last_seen)}, window={self.window})")

    def _extend_window(self, lo: int, hi: int) -> None:
        if self.window is None:
            self.window = (lo, hi)
        else:
            self.window = (min(self.window[0], lo), max(self.window[1], hi))

    def add(self, record: BgpUpdateRecord) -> None:
        ts = record.timestamp
        self._extend_window(ts, ts)
        prefixes = self.prefix_last_seen
        for p in record.announced:
            if prefixes.get(p, -1) < ts:
                if p not in prefixes:
                    self._by_length = None
                prefixes[p] = ts
        asns = self.asn_last_seen
        for a in set(record.as_path):
            if asns.get(a, -1) < ts:
                asns[a] = ts

    def merge(self, other: "ActivityIndex") -> "ActivityIndex":
        """Pointwise maximum of two indexes, in place."""
        for p, ts in other.prefix_last_seen.items():
            if self.prefix_last_seen.get(p, -1) < ts:
                self.prefix_last_seen[p] = ts
        for a, ts in other.asn_last_seen.items():
            if self.asn_last_seen.get(a, -1) < ts:
                self.asn_last_seen[a] = ts
        if other.window is not None:
            self._extend_window(*other.window)
        self._by_length = None
        return self

    def _sorted_networks(self) -> dict[int, list[int]]:
        if self._by_length is None:
            by_length: dict[int, list[int]] = {}
            for net, length in self.prefix_last_seen:
                by_length.setdefault(length, []).append(net)
            for nets in by_length.values():
                nets.sort()
            self._by_length = by_length
        return self._by_length

    def matching(self, rng: AddressRange, mode: str = OVERLAP) -> list[tuple[Prefix, int]]:
        """Indexed prefixes related to ``rng`` under ``mode``, with their last-seen times."""
        if mode not in MATCH_MODES:
            raise ValueError(f"unknown match mode {mode!r}")
        out = []
        for length, nets in self._sorted_networks().items():
            span = 1 << (32 - length)
            if mode == OVERLAP:
                lo = rng.start & ~(span - 1)
                hi = rng.end
            else:
                lo = rng.start
                hi = rng.end - span + 1
                if hi < lo:
                    continue
            for i in range(bisect_left(nets, lo), bisect_right(nets, hi)):
                p = Prefix(nets[i], length)
                out.append((p, self.prefix_last_seen[p]))
        return out

    def range_last_seen(self, rng: AddressRange, mode: str = OVERLAP) -> int | None:
        return max((ts for _, ts in self.matching(rng, mode)), default=None)


def index_activity(records: Iterable[BgpUpdateRecord], index: ActivityIndex | None = None) -> ActivityIndex:
    """Fold records into an index; withdrawals only widen the observation window."""
    if index is None:
        index = ActivityIndex()
    for record in records:
        index.add(record)
    return index


def last_bgp_activity(group: MaintainerGroup, index: ActivityIndex, mode: str = OVERLAP) -> int | None:
    """Latest sighting of any of the group's address ranges or AS numbers."""
    seen = [index.range_last_seen(r, mode) for r in group.inetnums]
    seen += [index.asn_last_seen.get(a.value) for a in group.aut_nums]
    return max((ts for ts in seen if ts is not None), default=None)


INDEX_HEADER = ("kind", "key", "last_seen_unix")


def write_index_csv(index: ActivityIndex, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(INDEX_HEADER)
    if index.window is not None:
        w.writerow(("window", "start", index.window[0]))
        w.writerow(("window", "end", index.window[1]))
    for p in sorted(index.prefix_last_seen):
        w.writerow(("prefix", str(p), index.prefix_last_seen[p]))
    for a in sorted(index.asn_last_seen):
        w.writerow(("asn", a, index.asn_last_seen[a]))


def read_index_csv(fh: IO[str]) -> ActivityIndex:
    index = ActivityIndex()
    lo = hi = None
    for row in csv.reader(fh):
        if not row or row[0] == "kind":
            continue
        kind, key, ts = row[0], row[1], int(row[2])
        if kind == "prefix":
            index.prefix_last_seen[Prefix.parse(key)] = ts
        elif kind == "asn":
            index.asn_last_seen[int(key)] = ts
        elif kind == "window":
            if key == "start":
                lo = ts
            else:
                hi = ts
    if lo is not None and hi is not None:
        index.window = (lo, hi)
    return index


def utc_iso(ts: int | None) -> str | None:
    if ts is None:
        return None
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
