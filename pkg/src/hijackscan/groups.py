"""Maintainer groups: objects under one administrative authority.

Objects are grouped by the ``mntner`` they reference in ``mnt-by``. Groups are
then reduced to those with exactly one referenced domain, merged when they
share that domain, and kept only if they hold inetnum or aut-num resources.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import IO, Iterable, NamedTuple, Sequence

from .rpsl import (
    AddressRange,
    AsNumber,
    DomainName,
    ObjectClass,
    RpslObject,
    aut_num,
    extract_domains,
    inetnum_range,
    mnt_by,
)
from .series import ccdf


class ObjectRef(NamedTuple):
    object_class: str
    primary_key: str

    def __str__(self) -> str:
        return f"{self.object_class}:{self.primary_key}"


@dataclass(frozen=True)
class MaintainerGroup:
    group_id: str
    mntner_keys: frozenset[str]
    member_objects: frozenset[ObjectRef]
    domains: frozenset[DomainName]
    inetnums: frozenset[AddressRange]
    aut_nums: frozenset[AsNumber]
    dangling: bool = False

    @property
    def size(self) -> int:
        return len(self.member_objects)

    @property
    def domain(self) -> DomainName | None:
        """The single referenced domain, if there is exactly one."""
        if len(self.domains) == 1:
            return next(iter(self.domains))
        return None

    @property
    def has_resources(self) -> bool:
        return bool(self.inetnums or self.aut_nums)

    def to_json(self) -> dict:
        return {
            "group_id": self.group_id,
            "mntner_keys": sorted(self.mntner_keys),
            "member_objects": sorted([list(r) for r in self.member_objects]),
            "domains": sorted(d.name for d in self.domains),
            "inetnums": [[r.start, r.end] for r in sorted(self.inetnums)],
            "aut_nums": sorted(a.value for a in self.aut_nums),
            "dangling": self.dangling,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MaintainerGroup":
        return cls(
            group_id=data["group_id"],
            mntner_keys=frozenset(data["mntner_keys"]),
            member_objects=frozenset(ObjectRef(*r) for r in data["member_objects"]),
            domains=frozenset(DomainName(d) for d in data["domains"]),
            inetnums=frozenset(AddressRange(*r) for r in data["inetnums"]),
            aut_nums=frozenset(AsNumber(a) for a in data["aut_nums"]),
            dangling=data.get("dangling", False),
        )


@dataclass
class CascadeReport:
    initial_groups: int = 0
    discarded_zero_size: int = 0
    discarded_no_domain: int = 0
    discarded_multi_domain: int = 0
    merged_groups: int = 0
    hijackable_groups: int = 0

    @property
    def pre_merge_survivors(self) -> int:
        return (self.initial_groups - self.discarded_zero_size - self.discarded_no_domain
                - self.discarded_multi_domain)

    def check(self) -> None:
        """Raise AssertionError if the counts are inconsistent."""
        counts = asdict(self)
        assert all(v >= 0 for v in counts.values()), counts
        assert self.pre_merge_survivors >= 0, counts
        assert self.merged_groups <= self.pre_merge_survivors, counts
        assert self.hijackable_groups <= self.merged_groups, counts

    def to_json(self) -> dict:
        return asdict(self)


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self):
        self.parent: dict = {}
        self.size: dict = {}

    def find(self, x):
        parent = self.parent
        if x not in parent:
            parent[x] = x
            self.size[x] = 1
            return x
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


def build_groups(objects: Iterable[RpslObject], *, registrable: bool = False) -> list[MaintainerGroup]:
    """One group per maintainer, present or merely referenced, sorted by key.

    A ``mntner`` object's reference to itself does not make it a member of its
    own group; references to other maintainers do.
    """
    present: set[str] = set()
    members: dict[str, set[ObjectRef]] = defaultdict(set)
    domains: dict[str, set[DomainName]] = defaultdict(set)
    inetnums: dict[str, set[AddressRange]] = defaultdict(set)
    autnums: dict[str, set[AsNumber]] = defaultdict(set)

    for obj in objects:
        is_mntner = obj.object_class is ObjectClass.MNTNER
        own = obj.primary_key.upper() if is_mntner else None
        if is_mntner:
            present.add(own)
        refs = {k for k in mnt_by(obj) if k != own}
        if not refs:
            continue
        ref = ObjectRef(obj.class_name, obj.primary_key)
        found = extract_domains(obj, registrable=registrable)
        rng = inetnum_range(obj) if obj.object_class is ObjectClass.INETNUM else None
        asn = aut_num(obj) if obj.object_class is ObjectClass.AUT_NUM else None
        for key in refs:
            members[key].add(ref)
            if found:
                domains[key].update(found)
            if rng is not None:
                inetnums[key].add(rng)
            if asn is not None:
                autnums[key].add(asn)

    groups = []
    for key in sorted(present | members.keys()):
        groups.append(MaintainerGroup(
            group_id=key,
            mntner_keys=frozenset([key]),
            member_objects=frozenset(members.get(key, ())),
            domains=frozenset(domains.get(key, ())),
            inetnums=frozenset(inetnums.get(key, ())),
            aut_nums=frozenset(autnums.get(key, ())),
            dangling=key not in present,
        ))
    return groups


def union_by_domain(groups: Iterable[MaintainerGroup]) -> list[MaintainerGroup]:
    """Merge groups into connected components of the group/domain graph."""
    groups = list(groups)
    uf = UnionFind()
    for i, g in enumerate(groups):
        uf.find(("g", i))
        for d in g.domains:
            uf.union(("g", i), ("d", d.name))
    components: dict = defaultdict(list)
    for i, g in enumerate(groups):
        components[uf.find(("g", i))].append(g)
    merged = [_merge(parts) for parts in components.values()]
    return sorted(merged, key=lambda g: g.group_id)


def _merge(parts: Sequence[MaintainerGroup]) -> MaintainerGroup:
    if len(parts) == 1:
        return parts[0]
    keys = frozenset().union(*(g.mntner_keys for g in parts))
    return MaintainerGroup(
        group_id=min(keys),
        mntner_keys=keys,
        member_objects=frozenset().union(*(g.member_objects for g in parts)),
        domains=frozenset().union(*(g.domains for g in parts)),
        inetnums=frozenset().union(*(g.inetnums for g in parts)),
        aut_nums=frozenset().union(*(g.aut_nums for g in parts)),
        dangling=any(g.dangling for g in parts),
    )


def merge_by_domain(groups: Iterable[MaintainerGroup]) -> tuple[list[MaintainerGroup], CascadeReport]:
    """Discard zero-size, domain-less and multi-domain groups, then merge by domain."""
    report = CascadeReport()
    survivors = []
    for g in groups:
        report.initial_groups += 1
        if not g.member_objects:
            report.discarded_zero_size += 1
        elif not g.domains:
            report.discarded_no_domain += 1
        elif len(g.domains) > 1:
            report.discarded_multi_domain += 1
        else:
            survivors.append(g)
    merged = union_by_domain(survivors)
    report.merged_groups = len(merged)
    return merged, report


def filter_hijackable(groups: Iterable[MaintainerGroup],
                      report: CascadeReport | None = None) -> list[MaintainerGroup]:
    kept = [g for g in groups if g.has_resources]
    if report is not None:
        report.hijackable_groups = len(kept)
    return kept


def group_size_series(groups: Iterable[MaintainerGroup]) -> list[tuple[int, float]]:
    """CCDF of member-object counts."""
    return ccdf(g.size for g in groups)


GROUPS_HEADER = ("group_id", "domain", "mntner_keys", "inetnum_count", "autnum_count", "object_count")


def write_groups_csv(groups: Iterable[MaintainerGroup], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(GROUPS_HEADER)
    for g in groups:
        w.writerow((g.group_id, " ".join(sorted(d.name for d in g.domains)),
                    " ".join(sorted(g.mntner_keys)), len(g.inetnums), len(g.aut_nums), g.size))


def write_groups_jsonl(groups: Iterable[MaintainerGroup], fh: IO[str]) -> None:
    for g in groups:
        fh.write(json.dumps(g.to_json(), sort_keys=True) + "\n")


def read_groups_jsonl(fh: IO[str]) -> list[MaintainerGroup]:
    return [MaintainerGroup.from_json(json.loads(line)) for line in fh if line.strip()]
