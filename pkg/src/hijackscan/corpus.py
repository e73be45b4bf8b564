"""Synthetic end-to-end corpus with planted ground truth.

The generator writes five dated registry snapshots, one MRT update archive, a
pre-populated WHOIS cache and a config file, plus ``expected.json`` listing
the verdict every surviving group must receive and the hand-counted cascade.
Expectations come from how each group was planted, never from running the
pipeline.

Planted group categories (counts in parentheses)::

    maintained      valid domain, recent registry or BGP activity     (25)
    idle            valid domain, no activity in the window            (5)
    abandoned       expired domain, no activity in the window          (2)
    expired_active  expired or unregistered domain, recent activity    (6)
    unknown         WHOIS status unknown                               (2)
    expiring_soon   domain expires 3 days after the epoch, active      (1)
    zero_size       mntner nobody references                           (3)
    no_domain       objects carry no e-mail domain                     (3)
    multi_domain    objects reference two domains                      (2)
    shared          two mntners sharing one domain, merged             (2)
    no_resource     only person objects                                (3)
    dangling        resource under a mntner with no mntner object      (1)
"""

from __future__ import annotations

import gzip
import ipaddress
import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

from . import mrtgen
from .whois import WhoisCache, WhoisResponse

EPOCH = date(2014, 7, 9)
SNAPSHOT_DATES = (date(2013, 9, 1), date(2013, 11, 1), date(2014, 3, 1), date(2014, 5, 27), EPOCH)
S1, S2, S3, S4, S5 = SNAPSHOT_DATES
BULK_DATE = S4
TRANSIT = (3333, 1299, 174, 6939, 2914)


def _ts(day: date, hour: int = 12) -> int:
    return int(datetime.combine(day, time(hour), timezone.utc).timestamp())


# WHOIS bodies in a few registry dialects
def _body(domain: str, kind: str, expiry: date | None) -> str:
    tld = domain.rsplit(".", 1)[-1]
    if kind == "unregistered":
        return f'No match for domain "{domain.upper()}".\r\n>>> Last update of whois database <<<\r\n'
    if kind == "opaque":
        return f"Domain: {domain}\nStatus: connect\nChanged: 2013-02-11T10:02:11+01:00\n"
    e = expiry
    if tld == "ru":
        return (f"% TCI Whois Service.\n\ndomain:        {domain.upper()}\nstate:         REGISTERED\n"
                f"created:       2006.03.14\npaid-till:     {e:%Y.%m.%d}\nsource:        TCI\n")
    if tld == "uk":
        return (f"    Domain name:\n        {domain}\n\n    Relevant dates:\n"
                f"        Registered on: 02-Feb-2004\n        Expiry date:  {e.day:02d}-{e:%b}-{e.year}\n")
    if tld == "it":
        return f"Domain:             {domain}\nStatus:             ok\nExpire Date:        {e:%Y-%m-%d}\n"
    if tld == "pl":
        return (f"DOMAIN NAME:           {domain}\nregistration date:     2003.07.01 13:00:00\n"
                f"renewal date:          {e:%Y.%m.%d} 13:00:00\n")
    if tld == "cz":
        return f"domain:       {domain}\nregistered:   01.01.2005 10:00:00\nexpire:       {e:%d.%m.%Y}\n"
    if tld == "net":
        return (f"   Domain Name: {domain.upper()}\n   Registrar WHOIS Server: \n"
                f"   Registrar Registration Expiration Date: {e:%Y-%m-%d}T04:00:00Z\n")
    return (f"   Domain Name: {domain.upper()}\n   Updated Date: 2013-01-01T00:00:00Z\n"
            f"   Registry Expiry Date: {e:%Y-%m-%d}T04:00:00Z\n")


@dataclass
class PlantedGroup:
    mntner: str
    category: str
    domains: tuple[str, ...] = ()
    whois: str = "dated"          # dated | unregistered | opaque | missing
    expiry: date | None = None
    inetnums: list[str] = field(default_factory=list)
    autnums: list[int] = field(default_factory=list)
    persons: int = 0
    has_mntner_object: bool = True
    # (date, action, target) with action in modify | add | remove
    changes: list[tuple[date, str, str]] = field(default_factory=list)
    # (timestamp, announced prefixes, as path)
    bgp: list[tuple[int, list[str], list[int]]] = field(default_factory=list)
    expected: str | None = None


class _Plan:
    def __init__(self):
        self.groups: list[PlantedGroup] = []
        self._slot = 0

    def block(self) -> int:
        self._slot += 1
        return self._slot

    def add(self, g: PlantedGroup) -> PlantedGroup:
        self.groups.append(g)
        return g


VALID_TLDS = ("com", "ru", "net", "uk", "it", "pl", "cz")


def _plan(rnd: random.Random) -> list[PlantedGroup]:
    p = _Plan()

    def valid_expiry() -> date:
        return EPOCH + timedelta(days=rnd.randrange(30, 2000))

    def domain(stem: str, tld: str) -> str:
        return f"{stem}.co.uk" if tld == "uk" else f"{stem}.{tld}"

    # maintained: activity rotates through the available signals
    for i in range(25):
        b = p.block()
        asn = 51000 + b if i % 2 == 0 else 196608 + b
        g = PlantedGroup(f"MAINT{i:02d}-MNT", "maintained",
                         (domain(f"maint{i:02d}-isp", VALID_TLDS[i % len(VALID_TLDS)]),),
                         expiry=valid_expiry(), inetnums=[f"185.{b}.0.0/23"], autnums=[asn],
                         expected="Maintained")
        mode = i % 5
        if mode == 0:
            g.changes.append((S3, "modify", g.inetnums[0]))
        elif mode == 1:
            g.bgp.append((_ts(EPOCH - timedelta(days=20)), [f"185.{b}.0.0/23"], [3333, 1299, asn]))
        elif mode == 2:
            # old routing activity only; a same-day registry edit keeps it maintained
            g.bgp.append((_ts(S1 + timedelta(days=10)), [f"185.{b}.0.0/23"], [174, asn]))
            g.changes.append((S5, "modify", g.inetnums[0]))
        elif mode == 3:
            # the second inetnum is deleted at the last snapshot: only the removal is recent
            g.inetnums.append(f"185.{b}.4.0/24")
            g.changes.append((S5, "remove", g.inetnums[1]))
        else:
            # seen only as a transit hop, or via a covering less-specific announcement
            if i % 2:
                g.bgp.append((_ts(EPOCH - timedelta(days=45)), ["198.18.0.0/24"], [6939, asn, 210000]))
            else:
                g.bgp.append((_ts(EPOCH - timedelta(days=45)), [f"185.{b}.0.0/16"], [2914, 210001]))
        p.add(g)

    for i in range(5):
        b = p.block()
        g = PlantedGroup(f"IDLE{i}-MNT", "idle", (f"idle{i}-net.com",), expiry=valid_expiry(),
                         inetnums=[f"185.{b}.0.0/24"], expected="Indeterminate")
        if i == 0:
            g.bgp.append((_ts(S1 + timedelta(days=5)), [f"185.{b}.0.0/24"], [1299, 210002]))
        p.add(g)

    # abandoned: a /22 plus an aut-num (touched only by the bulk update and by routing
    # activity older than the window), and a /24 never seen anywhere
    b = p.block()
    p.add(PlantedGroup("ABAND1-MNT", "abandoned", ("lost-telecom.ru",), expiry=date(2013, 5, 20),
                       inetnums=[f"185.{b}.0.0/22"], autnums=[51000 + b],
                       bgp=[(_ts(date(2013, 11, 15)), [f"185.{b}.0.0/22"], [3333, 51000 + b])],
                       changes=[(S2, "modify", f"185.{b}.0.0/22")],
                       expected="Abandoned"))
    b = p.block()
    p.add(PlantedGroup("ABAND2-MNT", "abandoned", ("gone-hosting.com",), expiry=date(2000, 8, 14),
                       inetnums=[f"185.{b}.0.0/24"], expected="Abandoned"))

    b = p.block()
    p.add(PlantedGroup("EXPBGP1-MNT", "expired_active", ("old-isp.ru",), expiry=date(2014, 1, 31),
                       inetnums=[f"185.{b}.0.0/23"],
                       bgp=[(_ts(EPOCH - timedelta(days=30)), [f"185.{b}.1.0/24"], [3333, 210003])],
                       expected="ExpiredButActive"))
    b = p.block()
    p.add(PlantedGroup("EXPASN-MNT", "expired_active", ("rete-vecchia.it",), expiry=date(2013, 12, 2),
                       inetnums=[f"185.{b}.0.0/24"], autnums=[51000 + b],
                       bgp=[(_ts(EPOCH - timedelta(days=14)), ["198.18.1.0/24"], [1299, 51000 + b])],
                       expected="ExpiredButActive"))
    b = p.block()
    p.add(PlantedGroup("EXPREG-MNT", "expired_active", ("stale-carrier.com",), expiry=date(2012, 4, 1),
                       inetnums=[f"185.{b}.0.0/24"], changes=[(S3, "modify", f"185.{b}.0.0/24")],
                       expected="ExpiredButActive"))
    b = p.block()
    p.add(PlantedGroup("UNREG-MNT", "expired_active", ("vanished-net.com",), whois="unregistered",
                       inetnums=[f"185.{b}.0.0/24"],
                       bgp=[(_ts(EPOCH - timedelta(days=8)), [f"185.{b}.0.0/24"], [174, 210004])],
                       expected="ExpiredButActive"))
    b = p.block()
    p.add(PlantedGroup("EXPADD-MNT", "expired_active", ("lapsed-link.net",), expiry=date(2013, 3, 3),
                       inetnums=[f"185.{b}.0.0/24", f"185.{b}.8.0/24"],
                       changes=[(S5, "add", f"185.{b}.8.0/24")], expected="ExpiredButActive"))
    b = p.block()
    p.add(PlantedGroup("EXPGAP-MNT", "expired_active", ("halfway-isp.pl",), expiry=date(2013, 10, 10),
                       inetnums=[f"185.{b}.0.0/24"], changes=[(S2, "modify", f"185.{b}.0.0/24")],
                       bgp=[(_ts(EPOCH - timedelta(days=120)), [f"185.{b}.0.0/24"], [2914, 210005])],
                       expected="ExpiredButActive"))

    b = p.block()
    p.add(PlantedGroup("UNKN1-MNT", "unknown", ("nowhere-net.invalid",), whois="missing",
                       inetnums=[f"185.{b}.0.0/24"], expected="Indeterminate"))
    b = p.block()
    p.add(PlantedGroup("UNKN2-MNT", "unknown", ("opaque-isp.de",), whois="opaque",
                       inetnums=[f"185.{b}.0.0/24"], changes=[(S3, "modify", f"185.{b}.0.0/24")],
                       expected="Indeterminate"))

    b = p.block()
    p.add(PlantedGroup("SOON-MNT", "expiring_soon", ("renew-me.com",), expiry=EPOCH + timedelta(days=3),
                       inetnums=[f"185.{b}.0.0/24"],
                       bgp=[(_ts(EPOCH - timedelta(days=2)), [f"185.{b}.0.0/24"], [3333, 210006])],
                       expected="Maintained"))

    for i in range(3):
        p.add(PlantedGroup(f"EMPTY{i}-MNT", "zero_size"))
    for i in range(3):
        b = p.block()
        p.add(PlantedGroup(f"NODOM{i}-MNT", "no_domain", (), inetnums=[f"185.{b}.0.0/24"]))
    for i in range(2):
        b = p.block()
        p.add(PlantedGroup(f"MULTI{i}-MNT", "multi_domain", (f"multi{i}-a.com", f"multi{i}-b.net"),
                           expiry=valid_expiry(), inetnums=[f"185.{b}.0.0/24"]))

    shared_expiry = valid_expiry()
    b = p.block()
    p.add(PlantedGroup("SHARED1-MNT", "shared", ("shared-isp.net",), expiry=shared_expiry,
                       inetnums=[f"185.{b}.0.0/24"],
                       bgp=[(_ts(EPOCH - timedelta(days=3)), [f"185.{b}.0.0/24"], [1299, 210007])],
                       expected="Maintained"))
    b = p.block()
    p.add(PlantedGroup("SHARED2-MNT", "shared", ("shared-isp.net",), expiry=shared_expiry,
                       inetnums=[f"185.{b}.0.0/24"]))

    for i in range(3):
        p.add(PlantedGroup(f"PEOPLE{i}-MNT", "no_resource", (f"people{i}.com",), expiry=valid_expiry(),
                           persons=2))

    b = p.block()
    p.add(PlantedGroup("GHOST-MNT", "dangling", ("phantom-org.com",), expiry=valid_expiry(),
                       inetnums=[f"185.{b}.0.0/24"], has_mntner_object=False,
                       changes=[(S3, "modify", f"185.{b}.0.0/24")], expected="Maintained"))
    return p.groups


def _cidr_range(cidr: str) -> str:
    net = ipaddress.IPv4Network(cidr)
    return f"{net.network_address} - {net.broadcast_address}"


def _objects_at(groups: list[PlantedGroup], day: date) -> list[list[tuple[str, str]]]:
    """Registry objects of every planted group as they stand on ``day``."""
    objects = []
    autnums = []
    for n, g in enumerate(groups):
        notify = [("notify", f"noc@{d}") for d in g.domains]
        if g.has_mntner_object:
            objects.append([("mntner", g.mntner), ("descr", f"{g.category} maintainer"),
                            ("auth", "MD5-PW # Filtered"), ("mnt-by", g.mntner), ("source", "RIPE")])
        for cidr in g.inetnums:
            added = [d for d, act, t in g.changes if act == "add" and t == cidr]
            removed = [d for d, act, t in g.changes if act == "remove" and t == cidr]
            if (added and day < added[0]) or (removed and day >= removed[0]):
                continue
            edits = sum(1 for d, act, t in g.changes if act == "modify" and t == cidr and d <= day)
            descr = f"{g.category} network" + (f" rev {edits}" if edits else "")
            obj = [("inetnum", _cidr_range(cidr)), ("netname", f"NET-{g.mntner[:-4]}"),
                   ("descr", descr), ("country", "EU")]
            # spread the addresses over both attribute kinds that carry them
            obj += [("abuse-mailbox" if n % 4 == 3 else "notify", v) for _, v in notify]
            obj += [("status", "ASSIGNED PA"), ("mnt-by", g.mntner), ("source", "RIPE")]
            objects.append(obj)
        for asn in g.autnums:
            obj = [("aut-num", f"AS{asn}"), ("as-name", f"AS-{g.mntner[:-4]}")] + notify
            obj += [("mnt-by", g.mntner), ("source", "RIPE")]
            autnums.append(obj)
        for k in range(g.persons):
            objects.append([("person", f"Contact {k} {g.mntner[:-4].title()}"),
                            ("nic-hdl", f"{g.mntner[:-4]}{k}-RIPE")] + notify
                           + [("mnt-by", g.mntner), ("source", "RIPE")])
    if day >= BULK_DATE:
        # registry-wide status attribute introduced on one day for every aut-num
        autnums = [obj[:-2] + [("status", "OTHER")] + obj[-2:] for obj in autnums]
    return objects + autnums


def _format(objects) -> str:
    header = "% This is a synthetic registry dump.\n% Contact addresses are not anonymized.\n\n"
    paras = []
    for obj in objects:
        paras.append("".join(f"{(k + ':').ljust(16)}{v}\n" for k, v in obj))
    return header + "\n".join(paras)


def _mrt(groups: list[PlantedGroup], rnd: random.Random) -> bytes:
    records: list[tuple[int, bytes]] = []

    def pfx(cidr: str) -> tuple[int, int]:
        net = ipaddress.IPv4Network(cidr)
        return int(net.network_address), net.prefixlen

    for g in groups:
        for ts, announced, path in g.bgp:
            as4 = not any(a > 0xFFFF for a in path) or rnd.random() < 0.5
            records.append((ts, mrtgen.encode_update(ts, [pfx(c) for c in announced], path=path,
                                                     as4=as4, peer_as=path[0])))
    t0, t1 = _ts(S1), _ts(EPOCH) - 3600
    for _ in range(400):
        ts = rnd.randrange(t0, t1)
        net = (100 << 24) | (rnd.randrange(64, 128) << 16) | (rnd.randrange(256) << 8)
        path = [rnd.choice(TRANSIT), rnd.choice(TRANSIT), 220000 + rnd.randrange(500)]
        if rnd.random() < 0.2:
            records.append((ts, mrtgen.encode_update(ts, withdrawn=[(net, 24)], peer_as=path[0])))
        else:
            records.append((ts, mrtgen.encode_update(ts, [(net, 24)], path=path, peer_as=path[0],
                                                     extended_time=rnd.random() < 0.3)))
    for _ in range(10):
        ts = rnd.randrange(t0, t1)
        records.append((ts, rnd.choice((mrtgen.encode_keepalive, mrtgen.encode_state_change,
                                        mrtgen.encode_table_dump, mrtgen.encode_ipv6_update))(ts)))
    records.sort(key=lambda r: r[0])
    return b"".join(r for _, r in records)


def _expected(groups: list[PlantedGroup]) -> dict:
    by_cat: dict[str, int] = {}
    for g in groups:
        by_cat[g.category] = by_cat.get(g.category, 0) + 1
    initial = len(groups)
    zero, nodom, multi = by_cat["zero_size"], by_cat["no_domain"], by_cat["multi_domain"]
    survivors = initial - zero - nodom - multi
    merged = survivors - (by_cat["shared"] - 1)
    hijackable = merged - by_cat["no_resource"]
    verdicts = {g.mntner: g.expected for g in groups if g.expected}
    abandoned = [g for g in groups if g.expected == "Abandoned"]

    def slash24s(cidr: str) -> int:
        return 1 << max(0, 24 - int(cidr.split("/")[1]))

    return {
        "epoch": EPOCH.isoformat(),
        "cascade": {
            "initial_groups": initial,
            "discarded_zero_size": zero,
            "discarded_no_domain": nodom,
            "discarded_multi_domain": multi,
            "merged_groups": merged,
            "hijackable_groups": hijackable,
        },
        "verdicts": dict(sorted(verdicts.items())),
        "abandoned": {
            "groups": len(abandoned),
            "inetnums": sum(len(g.inetnums) for g in abandoned),
            "slash24s": sum(slash24s(c) for g in abandoned for c in g.inetnums),
            "aut_nums": sum(len(g.autnums) for g in abandoned),
        },
        "bulk_batches": [{"date": BULK_DATE.isoformat(), "object_class": "aut-num"}],
        "expired_groups": sum(1 for g in groups if g.category in ("abandoned", "expired_active")),
    }


def generate(directory: str | Path, seed: int = 2014) -> dict:
    """Write the corpus under ``directory`` and return the expectations."""
    rnd = random.Random(seed)
    root = Path(directory)
    (root / "snapshots").mkdir(parents=True, exist_ok=True)
    groups = _plan(rnd)

    conf = ["# synthetic corpus", f"epoch = {EPOCH.isoformat()}", "out_dir = out",
            "cache_dir = whois_cache", "whois.offline = true"]
    for day in SNAPSHOT_DATES:
        text = _format(_objects_at(groups, day)).encode()
        name = f"snapshots/ripe.db.{day:%Y%m%d}"
        if day == SNAPSHOT_DATES[-1]:
            name += ".gz"
            text = gzip.compress(text, mtime=0)
        (root / name).write_bytes(text)
        conf.append(f"snapshot.{day.isoformat()} = {name}")

    (root / "updates.mrt.gz").write_bytes(gzip.compress(_mrt(groups, rnd), mtime=0))
    conf.append("mrt = updates.mrt.gz")

    cache = WhoisCache(root / "whois_cache")
    seen = set()
    for g in groups:
        for d in g.domains:
            if d in seen or g.whois == "missing":
                continue
            seen.add(d)
            server = "whois.synthetic." + d.rsplit(".", 1)[-1]
            cache.put(d, EPOCH, WhoisResponse(server, _body(d, g.whois, g.expiry).encode()))

    (root / "hijackscan.conf").write_text("\n".join(conf) + "\n", encoding="utf-8")
    expected = _expected(groups)
    (root / "expected.json").write_text(json.dumps(expected, indent=2) + "\n", encoding="utf-8")
    return expected
