"""Administrative activity from a series of dated snapshots."""

from __future__ import annotations

import csv
import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

from .groups import MaintainerGroup, ObjectRef
from .rpsl import RpslObject, mnt_by
from .series import ecdf

DEFAULT_BULK_THRESHOLD = 0.95


class EventKind(str, enum.Enum):
    ADDED = "Added"
    MODIFIED = "Modified"
    REMOVED = "Removed"


class ChangeEvent(NamedTuple):
    date: date
    object_class: str
    primary_key: str
    kind: EventKind
    # maintainers of the object version involved; lets removals be attributed
    maintainers: frozenset = frozenset()

    @property
    def object_key(self) -> ObjectRef:
        return ObjectRef(self.object_class, self.primary_key)


class BulkBatch(NamedTuple):
    date: date
    object_class: str
    changed_count: int
    class_total: int
    fraction: float


@dataclass
class BulkFilterReport:
    excluded_batches: list[BulkBatch] = field(default_factory=list)

    def to_json(self) -> list[dict]:
        return [{"date": b.date.isoformat(), "object_class": b.object_class,
                 "changed_count": b.changed_count, "class_total": b.class_total,
                 "fraction": b.fraction} for b in self.excluded_batches]


class PreconditionError(ValueError):
    pass


def _snapshot_date(objects: Sequence[RpslObject]) -> date | None:
    for obj in objects:
        if obj.snapshot_date is not None:
            return obj.snapshot_date
    return None


def _index(objects: Iterable[RpslObject]) -> dict[tuple[str, str], tuple[tuple[str, ...], frozenset]]:
    digests: dict = defaultdict(list)
    maintainers: dict = defaultdict(set)
    for obj in objects:
        key = obj.key
        digests[key].append(obj.content_digest)
        maintainers[key].update(mnt_by(obj))
    # objects sharing a primary key (e.g. route objects with different origins)
    # compare as a multiset
    return {k: (tuple(sorted(v)), frozenset(maintainers[k])) for k, v in digests.items()}


def diff_snapshots(prev: Sequence[RpslObject], next: Sequence[RpslObject], *,
                   prev_date: date | None = None, next_date: date | None = None) -> list[ChangeEvent]:
    """Added, Modified and Removed events between two snapshots, dated at the later one."""
    prev_date = prev_date or _snapshot_date(prev)
    next_date = next_date or _snapshot_date(next)
    if prev_date is None or next_date is None:
        raise PreconditionError("snapshot dates unknown")
    if not prev_date < next_date:
        raise PreconditionError(f"snapshot dates not increasing: {prev_date} -> {next_date}")
    before, after = _index(prev), _index(next)
    events = []
    for key in sorted(before.keys() | after.keys()):
        old, new = before.get(key), after.get(key)
        if old is None:
            events.append(ChangeEvent(next_date, *key, EventKind.ADDED, new[1]))
        elif new is None:
            events.append(ChangeEvent(next_date, *key, EventKind.REMOVED, old[1]))
        elif old[0] != new[0]:
            events.append(ChangeEvent(next_date, *key, EventKind.MODIFIED, old[1] | new[1]))
    return events


def events_from_last_modified(objects: Iterable[RpslObject]) -> list[ChangeEvent]:
    """Modified events taken from ``last-modified:`` attributes, where present."""
    events = []
    for obj in objects:
        stamp = obj.first("last-modified")
        if not stamp:
            continue
        try:
            day = date.fromisoformat(stamp[:10])
        except ValueError:
            continue
        events.append(ChangeEvent(day, obj.class_name, obj.primary_key, EventKind.MODIFIED,
                                  frozenset(mnt_by(obj))))
    return sorted(events)


def detect_bulk_updates(events: Iterable[ChangeEvent], class_totals: Mapping[str, int],
                        threshold: float = DEFAULT_BULK_THRESHOLD
                        ) -> tuple[list[ChangeEvent], BulkFilterReport]:
    """Drop Modified events of any (date, class) batch touching ``threshold`` of that class."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    events = list(events)
    modified = Counter((e.date, e.object_class) for e in events if e.kind is EventKind.MODIFIED)
    report = BulkFilterReport()
    excluded = set()
    for (day, cls), n in sorted(modified.items()):
        total = class_totals.get(cls, 0)
        if total > 0 and n >= threshold * total:
            excluded.add((day, cls))
            report.excluded_batches.append(BulkBatch(day, cls, n, total, n / total))
    kept = [e for e in events
            if not (e.kind is EventKind.MODIFIED and (e.date, e.object_class) in excluded)]
    return kept, report


class RegistryIndex:
    """Latest event date per object and per maintainer."""

    def __init__(self, events: Iterable[ChangeEvent] = ()):
        self.by_object: dict[ObjectRef, date] = {}
        self.by_mntner: dict[str, date] = {}
        self.update(events)

    def update(self, events: Iterable[ChangeEvent]) -> None:
        for e in events:
            key = e.object_key
            if key not in self.by_object or e.date > self.by_object[key]:
                self.by_object[key] = e.date
            for m in e.maintainers:
                if m not in self.by_mntner or e.date > self.by_mntner[m]:
                    self.by_mntner[m] = e.date

    def last_change(self, group: MaintainerGroup) -> date | None:
        dates = [self.by_object[r] for r in group.member_objects if r in self.by_object]
        dates += [self.by_mntner[m] for m in group.mntner_keys if m in self.by_mntner]
        return max(dates, default=None)


def last_registry_change(group: MaintainerGroup,
                         events: Iterable[ChangeEvent] | RegistryIndex) -> date | None:
    """Latest change to any member object, or to any object under the group's maintainers."""
    index = events if isinstance(events, RegistryIndex) else RegistryIndex(events)
    return index.last_change(group)


def activity_cdf(values: Iterable[timedelta | None]) -> list[tuple[object, float]]:
    """Empirical CDF of inactivity durations; ``None`` ("never") sorts last."""
    return ecdf(values)


EVENTS_HEADER = ("date", "class", "primary_key", "kind", "mnt_by")


def write_events_csv(events: Iterable[ChangeEvent], fh: IO[str], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(EVENTS_HEADER)
    for e in events:
        w.writerow((e.date.isoformat(), e.object_class, e.primary_key, e.kind.value,
                    " ".join(sorted(e.maintainers))))


def read_events_csv(fh: IO[str]) -> list[ChangeEvent]:
    reader = csv.reader(fh)
    out = []
    for row in reader:
        if not row or row[0] == "date":
            continue
        day, cls, key, kind = row[:4]
        maint = frozenset(row[4].split()) if len(row) > 4 else frozenset()
        out.append(ChangeEvent(date.fromisoformat(day), cls, key, EventKind(kind), maint))
    return out
