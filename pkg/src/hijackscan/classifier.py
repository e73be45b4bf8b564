"""Per-group verdicts from domain status, registry activity and BGP activity."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from typing import IO, Iterable

from .bgp import utc_iso
from .groups import MaintainerGroup
from .rpsl import DomainName, slash24_equivalents
from .whois import DomainRecord, DomainStatus

MONTH = timedelta(days=30)


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    epoch: date
    maintained_window: timedelta = 6 * MONTH
    active_window: timedelta = 3 * MONTH
    expiring_soon_window: timedelta = timedelta(days=7)

    def __post_init__(self):
        for name in ("maintained_window", "active_window", "expiring_soon_window"):
            if getattr(self, name) <= timedelta(0):
                raise ValueError(f"{name} must be positive")
        if self.active_window > self.maintained_window:
            raise ValueError("active_window must not exceed maintained_window")


class Verdict(str, enum.Enum):
    ABANDONED = "Abandoned"
    EXPIRED_BUT_ACTIVE = "ExpiredButActive"
    MAINTAINED = "Maintained"
    INDETERMINATE = "Indeterminate"


def epoch_instant(epoch: date) -> datetime:
    return datetime.combine(epoch, time.min, timezone.utc)


def time_since(epoch: date, when: date | int | None) -> timedelta | None:
    if when is None:
        return None
    if isinstance(when, date):
        delta = epoch - when
    else:
        delta = epoch_instant(epoch) - datetime.fromtimestamp(when, timezone.utc)
    return max(delta, timedelta(0))


def combined_inactivity(last_registry: date | None, last_bgp: int | None,
                        epoch: date) -> timedelta | None:
    """Time from the most recent of the two signals to the epoch.

    Signals after the epoch count as zero inactivity. ``None`` means neither
    signal was ever seen, which ranks as more inactive than any duration
    (see :func:`inactivity_key`).
    """
    spans = (time_since(epoch, last_registry), time_since(epoch, last_bgp))
    return min((s for s in spans if s is not None), default=None)


def inactivity_key(value: timedelta | None) -> tuple[int, timedelta]:
    """Sort key placing ``None`` after every finite duration."""
    return (1, timedelta(0)) if value is None else (0, value)


def _days(d: timedelta) -> str:
    days = d / timedelta(days=1)
    return f"{days:g} days"


@dataclass(frozen=True)
class ResourceVerdict:
    group_id: str
    domain: DomainName
    domain_status: DomainStatus
    verdict: Verdict
    last_registry_change: date | None = None
    last_bgp_activity: int | None = None
    combined_inactivity: timedelta | None = None
    expiry_date: date | None = None
    inetnum_count: int = 0
    slash24_total: int = 0
    asn_total: int = 0
    evidence: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        ci = self.combined_inactivity
        return {
            "group_id": self.group_id,
            "domain": self.domain.name,
            "domain_status": self.domain_status.value,
            "expiry_date": self.expiry_date.isoformat() if self.expiry_date else None,
            "last_registry_change": self.last_registry_change.isoformat()
            if self.last_registry_change else None,
            "last_bgp_activity": utc_iso(self.last_bgp_activity),
            "combined_inactivity_days": None if ci is None else ci / timedelta(days=1),
            "verdict": self.verdict.value,
            "inetnum_count": self.inetnum_count,
            "slash24_total": self.slash24_total,
            "asn_total": self.asn_total,
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ResourceVerdict":
        bgp = data.get("last_bgp_activity")
        ci = data.get("combined_inactivity_days")
        return cls(
            group_id=data["group_id"],
            domain=DomainName(data["domain"]),
            domain_status=DomainStatus(data["domain_status"]),
            verdict=Verdict(data["verdict"]),
            last_registry_change=date.fromisoformat(data["last_registry_change"])
            if data.get("last_registry_change") else None,
            last_bgp_activity=int(datetime.strptime(bgp, "%Y-%m-%dT%H:%M:%SZ")
                                  .replace(tzinfo=timezone.utc).timestamp()) if bgp else None,
            combined_inactivity=None if ci is None else timedelta(days=ci),
            expiry_date=date.fromisoformat(data["expiry_date"]) if data.get("expiry_date") else None,
            inetnum_count=data.get("inetnum_count", 0),
            slash24_total=data["slash24_total"],
            asn_total=data["asn_total"],
            evidence=tuple(data.get("evidence", ())),
        )

    def check(self, thresholds: Thresholds) -> None:
        """Raise ContractError if the verdict contradicts its own inputs."""
        ci = self.combined_inactivity
        stale = ci is None or ci >= thresholds.maintained_window
        if self.verdict is Verdict.ABANDONED and not (self.domain_status.is_expired and stale):
            raise ContractError(f"{self.group_id}: Abandoned without expired domain and inactivity")
        if self.verdict is Verdict.EXPIRED_BUT_ACTIVE and not (self.domain_status.is_expired and not stale):
            raise ContractError(f"{self.group_id}: ExpiredButActive without expiry and recent activity")


def classify(group: MaintainerGroup, record: DomainRecord, last_registry: date | None,
             last_bgp: int | None, thresholds: Thresholds) -> ResourceVerdict:
    """Decision table:

    ============================  =============================================
    domain status                 verdict
    ============================  =============================================
    Unknown                       Indeterminate
    Expired / Unregistered        Abandoned if inactive for the maintained
                                  window (or never seen), else ExpiredButActive
    Valid / ExpiringSoon          Maintained if any signal is inside the
                                  maintained window, else Indeterminate
    ============================  =============================================
    """
    if not group.has_resources:
        raise ContractError(f"group {group.group_id} holds no inetnum or aut-num resources")
    if group.domain is not None and group.domain != record.domain:
        raise ContractError(f"group {group.group_id} references {group.domain}, not {record.domain}")

    epoch = thresholds.epoch
    window = thresholds.maintained_window
    status = record.status
    evidence = []

    if record.expiry_date is not None:
        evidence.append(f"domain {record.domain} {status.value}, expiry {record.expiry_date.isoformat()}")
    else:
        evidence.append(f"domain {record.domain} {status.value}, no expiry date"
                        + (f" ({record.error})" if record.error else ""))
    if status is DomainStatus.EXPIRING_SOON:
        evidence.append(f"warning: domain expires within {_days(thresholds.expiring_soon_window)}"
                        " of the epoch")

    reg_since = time_since(epoch, last_registry)
    if last_registry is None:
        evidence.append("no registry change observed")
    else:
        evidence.append(f"last registry change {last_registry.isoformat()}"
                        f" ({_days(reg_since)} before epoch)")
    bgp_since = time_since(epoch, last_bgp)
    if last_bgp is None:
        evidence.append("no BGP activity observed")
    else:
        evidence.append(f"last BGP activity {utc_iso(last_bgp)} ({_days(bgp_since)} before epoch)")

    combined = combined_inactivity(last_registry, last_bgp, epoch)
    stale = combined is None or combined >= window
    if combined is not None:
        relation = ">=" if stale else "<"
        evidence.append(f"combined inactivity {_days(combined)} {relation} {_days(window)} window")

    if status is DomainStatus.UNKNOWN:
        verdict = Verdict.INDETERMINATE
    elif status.is_expired:
        verdict = Verdict.ABANDONED if stale else Verdict.EXPIRED_BUT_ACTIVE
    else:
        verdict = Verdict.INDETERMINATE if stale else Verdict.MAINTAINED

    return ResourceVerdict(
        group_id=group.group_id,
        domain=record.domain,
        domain_status=status,
        verdict=verdict,
        last_registry_change=last_registry,
        last_bgp_activity=last_bgp,
        combined_inactivity=combined,
        expiry_date=record.expiry_date,
        inetnum_count=len(group.inetnums),
        slash24_total=sum(slash24_equivalents(r) for r in group.inetnums),
        asn_total=len(group.aut_nums),
        evidence=tuple(evidence),
    )


@dataclass
class VerdictTotals:
    groups: int = 0
    inetnums: int = 0
    slash24s: int = 0
    aut_nums: int = 0


@dataclass
class Summary:
    totals: dict[Verdict, VerdictTotals]
    # expired groups whose inactivity falls between the active and maintained windows
    gap_groups: int = 0
    expired_active_recent: int = 0

    def to_json(self) -> dict:
        return {
            "verdicts": {v.value: vars(self.totals[v]).copy() for v in Verdict},
            "expired_active_within_active_window": self.expired_active_recent,
            "expired_in_gap": self.gap_groups,
        }


def summarize(verdicts: Iterable[ResourceVerdict], thresholds: Thresholds | None = None) -> Summary:
    totals = {v: VerdictTotals() for v in Verdict}
    summary = Summary(totals)
    for rv in verdicts:
        t = totals[rv.verdict]
        t.groups += 1
        t.inetnums += rv.inetnum_count
        t.slash24s += rv.slash24_total
        t.aut_nums += rv.asn_total
        if thresholds is not None and rv.domain_status.is_expired and rv.combined_inactivity is not None:
            if rv.combined_inactivity < thresholds.active_window:
                summary.expired_active_recent += 1
            elif rv.combined_inactivity < thresholds.maintained_window:
                summary.gap_groups += 1
    return summary


VERDICTS_HEADER = ("group_id", "domain", "domain_status", "expiry_date", "last_registry_change",
                   "last_bgp_activity", "combined_inactivity_days", "verdict", "inetnum_count",
                   "slash24_total", "asn_total")


def write_verdicts_jsonl(verdicts: Iterable[ResourceVerdict], fh: IO[str]) -> None:
    for rv in verdicts:
        fh.write(json.dumps(rv.to_json(), sort_keys=True) + "\n")


def read_verdicts_jsonl(fh: IO[str]) -> list[ResourceVerdict]:
    return [ResourceVerdict.from_json(json.loads(line)) for line in fh if line.strip()]


def write_verdicts_csv(verdicts: Iterable[ResourceVerdict], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(VERDICTS_HEADER)
    for rv in verdicts:
        row = rv.to_json()
        w.writerow(["" if row[k] is None else row[k] for k in VERDICTS_HEADER])
