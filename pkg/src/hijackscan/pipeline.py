"""Run configuration, staged execution and persisted intermediate products.

Every stage reads its inputs from the output directory (or from the raw
inputs for the first stages) and writes its products back there, so any
stage can be re-run on its own once its upstream products exist.

Output directory layout::

    stats.csv                 per-class object counts of the latest snapshot
    groups_all.jsonl          merged single-domain groups (before the resource filter)
    groups.jsonl, groups.csv  hijackable groups
    cascade.json              group counts at each reduction step
    domains.jsonl             one WHOIS-derived record per domain
    expiry_histogram.csv, tlds_all.csv, tlds_expired.csv
    events.csv, bulk.json     registry change events and excluded bulk batches
    activity_index.csv        BGP last-seen index
    verdicts.jsonl, verdicts.csv, summary.json
    series/<kind>.csv         plot-ready distribution series
    run_report.json           counters, findings and timings of the last run
"""

from __future__ import annotations

import json
import logging
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Callable, Mapping

from filelock import FileLock, Timeout

from . import bgp, classifier, groups, registry, rpsl, series, whois
from ._io import CorruptInputError
from .mrt import MrtError, MrtStats, iter_mrt

log = logging.getLogger(__name__)

STAGES = ("stats", "group", "domains", "registry", "bgp", "classify", "report")
ENV_CACHE_DIR = "HIJACKSCAN_CACHE_DIR"
ENV_MAX_QPS = "HIJACKSCAN_WHOIS_MAX_QPS"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


@dataclass
class RunConfig:
    snapshots: list[tuple[date, Path]] = field(default_factory=list)
    mrt: list[Path] = field(default_factory=list)
    out_dir: Path = Path("hijackscan-out")
    cache_dir: Path | None = None
    epoch: date | None = None
    whois: whois.WhoisConfig = field(default_factory=whois.WhoisConfig)
    maintained_days: float = 180
    active_days: float = 90
    expiring_soon_days: float = 7
    bulk_threshold: float = registry.DEFAULT_BULK_THRESHOLD
    bgp_match: str = bgp.OVERLAP
    registrable: bool = False

    @property
    def effective_epoch(self) -> date:
        if self.epoch is not None:
            return self.epoch
        if not self.snapshots:
            raise ConfigError("no epoch given and no snapshots to take it from")
        return self.snapshots[-1][0]

    @property
    def effective_cache_dir(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.out_dir / "whois_cache"

    def thresholds(self) -> classifier.Thresholds:
        return classifier.Thresholds(
            self.effective_epoch,
            maintained_window=timedelta(days=self.maintained_days),
            active_window=timedelta(days=self.active_days),
            expiring_soon_window=timedelta(days=self.expiring_soon_days),
        )

    def validate(self, stages) -> None:
        """Check everything the selected stages will need before any work starts."""
        stages = set(stages)
        if stages & {"stats", "group"} and not self.snapshots:
            raise ConfigError("at least one snapshot is required")
        dates = [d for d, _ in self.snapshots]
        if dates != sorted(set(dates)):
            raise ConfigError("snapshot dates must be distinct")
        if "registry" in stages and len(self.snapshots) < 2:
            raise ConfigError("the registry stage needs at least two snapshots")
        if "bgp" in stages and not self.mrt:
            raise ConfigError("the bgp stage needs at least one MRT input")
        needed = []
        if stages & {"stats", "group", "registry"}:
            needed += [p for _, p in self.snapshots]
        if "bgp" in stages:
            needed += self.mrt
        for p in needed:
            if not Path(p).is_file():
                raise ConfigError(f"input not readable: {p}")
        if self.snapshots and self.effective_epoch < dates[-1]:
            raise ConfigError(f"epoch {self.effective_epoch} precedes latest snapshot {dates[-1]}")
        if self.bgp_match not in bgp.MATCH_MODES:
            raise ConfigError(f"bgp.match must be one of {', '.join(bgp.MATCH_MODES)}")
        if not 0 < self.bulk_threshold <= 1:
            raise ConfigError("registry.bulk_threshold must be in (0, 1]")
        if self.whois.max_qps <= 0:
            raise ConfigError("whois.max_qps must be positive")
        try:
            self.thresholds()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


# --- config file ------------------------------------------------------------------

def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _date(value: str) -> date:
    try:
        return date.fromisoformat(value.strip())
    except ValueError:
        raise ConfigError(f"not an ISO date: {value!r}") from None


def _number(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None


def parse_config(text: str, base: Path = Path("."), config: RunConfig | None = None) -> RunConfig:
    """Read the flat ``key = value`` format; relative paths resolve against ``base``.

    Recognized keys::

        snapshot.<YYYY-MM-DD> = <path>     one line per snapshot
        mrt = <path> [<path> ...]          repeatable
        out_dir, cache_dir = <path>
        epoch = <YYYY-MM-DD>
        whois.offline = true|false
        whois.max_qps, whois.timeout, whois.max_retries, whois.max_referrals = <number>
        whois.server.<tld> = <host>
        thresholds.maintained_days, thresholds.active_days,
        thresholds.expiring_soon_days = <days>
        registry.bulk_threshold = <fraction>
        bgp.match = overlap|exact
        domains.registrable = true|false

    Blank lines and lines starting with ``#`` are ignored.
    """
    cfg = config or RunConfig()
    snapshots = dict(cfg.snapshots)

    def path(v: str) -> Path:
        p = Path(v.strip()).expanduser()
        return p if p.is_absolute() else base / p

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = key.strip(), value.strip()
        if key.startswith("snapshot."):
            snapshots[_date(key[len("snapshot."):])] = path(value)
        elif key == "mrt":
            cfg.mrt.extend(path(v) for v in value.split())
        elif key == "out_dir":
            cfg.out_dir = path(value)
        elif key == "cache_dir":
            cfg.cache_dir = path(value)
        elif key == "epoch":
            cfg.epoch = _date(value)
        elif key == "whois.offline":
            cfg.whois.offline = _bool(value)
        elif key == "whois.max_qps":
            cfg.whois.max_qps = _number(key, value)
        elif key == "whois.timeout":
            cfg.whois.timeout = _number(key, value)
        elif key == "whois.max_retries":
            cfg.whois.max_retries = int(_number(key, value))
        elif key == "whois.max_referrals":
            cfg.whois.max_referrals = int(_number(key, value))
        elif key.startswith("whois.server."):
            cfg.whois.servers[key[len("whois.server."):].lower()] = value
        elif key == "thresholds.maintained_days":
            cfg.maintained_days = _number(key, value)
        elif key == "thresholds.active_days":
            cfg.active_days = _number(key, value)
        elif key == "thresholds.expiring_soon_days":
            cfg.expiring_soon_days = _number(key, value)
        elif key == "registry.bulk_threshold":
            cfg.bulk_threshold = _number(key, value)
        elif key == "bgp.match":
            cfg.bgp_match = value
        elif key == "domains.registrable":
            cfg.registrable = _bool(value)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg.snapshots = sorted(snapshots.items())
    return cfg


def load_config(path: str | os.PathLike | None, env: Mapping[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        cfg = parse_config(text, p.parent, cfg)
    env = os.environ if env is None else env
    if env.get(ENV_CACHE_DIR):
        cfg.cache_dir = Path(env[ENV_CACHE_DIR])
    if env.get(ENV_MAX_QPS):
        cfg.whois.max_qps = _number(ENV_MAX_QPS, env[ENV_MAX_QPS])
    return cfg


# --- run ---------------------------------------------------------------------------

@dataclass
class RunReport:
    stages: dict[str, dict] = field(default_factory=dict)
    cascade: dict | None = None
    summary: dict | None = None
    findings: list[str] = field(default_factory=list)
    failed_stage: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_stage is None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "stages": self.stages,
            "cascade": self.cascade,
            "summary": self.summary,
            "findings": self.findings,
        }


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


class Pipeline:
    def __init__(self, config: RunConfig, *, transport: whois.Transport = whois.tcp_transport):
        self.config = config
        self.out = Path(config.out_dir)
        self.report = RunReport()
        self.transport = transport
        self._snapshots: dict[date, list[rpsl.RpslObject]] = {}

    # helpers

    def _path(self, name: str) -> Path:
        return self.out / name

    def _require(self, *names: str) -> None:
        for name in names:
            if not self._path(name).exists():
                raise StageError(f"missing upstream product {name}; run the producing stage first")

    def _snapshot(self, day: date, counters: Counter | None = None) -> list[rpsl.RpslObject]:
        if day not in self._snapshots:
            path = dict(self.config.snapshots)[day]
            stats = rpsl.ParseStats()
            try:
                objs = rpsl.parse_snapshot(path, day, stats)
            except CorruptInputError as exc:
                raise StageError(f"{path}: {exc}") from exc
            if stats.flagged:
                self.report.findings.append(
                    f"snapshot {day}: {stats.skipped} of {stats.paragraphs} paragraphs unparseable")
            self._snapshots[day] = objs
        objs = self._snapshots[day]
        if counters is not None:
            counters[f"objects_{day.isoformat()}"] = len(objs)
        return objs

    def _latest(self, counters: Counter | None = None) -> list[rpsl.RpslObject]:
        return self._snapshot(self.config.snapshots[-1][0], counters)

    # stages

    def stage_stats(self, c: Counter) -> None:
        rows = rpsl.snapshot_stats(self._latest(c))
        with open(self._path("stats.csv"), "w", encoding="utf-8", newline="") as fh:
            rpsl.write_stats_csv(rows, fh)

    def stage_group(self, c: Counter) -> None:
        initial = groups.build_groups(self._latest(c), registrable=self.config.registrable)
        merged, cascade = groups.merge_by_domain(initial)
        hijackable = groups.filter_hijackable(merged, cascade)
        cascade.check()
        with open(self._path("groups_all.jsonl"), "w", encoding="utf-8") as fh:
            groups.write_groups_jsonl(merged, fh)
        with open(self._path("groups.jsonl"), "w", encoding="utf-8") as fh:
            groups.write_groups_jsonl(hijackable, fh)
        with open(self._path("groups.csv"), "w", encoding="utf-8", newline="") as fh:
            groups.write_groups_csv(hijackable, fh)
        _write_json(self._path("cascade.json"), cascade.to_json())
        (self.out / "series").mkdir(exist_ok=True)
        series.emit_series("group_sizes", groups.group_size_series(initial),
                           self.out / "series" / "group_sizes.csv")
        self.report.cascade = cascade.to_json()
        c.update(initial_groups=len(initial), merged_groups=len(merged), hijackable_groups=len(hijackable))

    def stage_domains(self, c: Counter) -> None:
        self._require("groups_all.jsonl")
        with open(self._path("groups_all.jsonl"), encoding="utf-8") as fh:
            merged = groups.read_groups_jsonl(fh)
        names = sorted({d for g in merged for d in g.domains}, key=lambda d: d.name)
        cache = whois.WhoisCache(self.config.effective_cache_dir)
        client = whois.WhoisClient(self.config.whois, cache, transport=self.transport)
        epoch = self.config.effective_epoch
        records = []
        for name in names:
            rec = client.lookup(name, epoch)
            if rec.error:
                self.report.findings.append(f"whois {name}: {rec.error}")
            records.append(rec)
        with open(self._path("domains.jsonl"), "w", encoding="utf-8") as fh:
            whois.write_records_jsonl(records, fh)
        hist = whois.expiry_histogram(records)
        with open(self._path("expiry_histogram.csv"), "w", encoding="utf-8") as fh:
            fh.write("expiry_date,count\n")
            fh.writelines(f"{d.isoformat()},{n}\n" for d, n in hist.by_date)
        for fname, table in (("tlds_all.csv", hist.tlds_all), ("tlds_expired.csv", hist.tlds_expired)):
            with open(self._path(fname), "w", encoding="utf-8") as fh:
                fh.write("tld,count,percent\n")
                fh.writelines(f"{t},{n},{p}\n" for t, n, p in table)
        (self.out / "series").mkdir(exist_ok=True)
        series.emit_series("expiry_dates", series.ecdf(r.expiry_date for r in records
                                                       if r.expiry_date is not None),
                           self.out / "series" / "expiry_dates.csv")
        c.update(domains=len(records), **{f"status_{s.value}": n for s, n in
                                          sorted(Counter(r.status for r in records).items())})
        c.update({f"whois_{k}": v for k, v in client.stats.items()})

    def stage_registry(self, c: Counter) -> None:
        snaps = self.config.snapshots
        events = []
        excluded = registry.BulkFilterReport()
        for (d0, _), (d1, _) in zip(snaps, snaps[1:]):
            prev, nxt = self._snapshot(d0, c), self._snapshot(d1, c)
            raw = registry.diff_snapshots(prev, nxt, prev_date=d0, next_date=d1)
            totals = Counter(o.class_name for o in nxt)
            kept, rep = registry.detect_bulk_updates(raw, totals, self.config.bulk_threshold)
            events += kept
            excluded.excluded_batches += rep.excluded_batches
            c["events_raw"] += len(raw)
            # the earlier snapshot is no longer needed
            self._snapshots.pop(d0, None)
        with open(self._path("events.csv"), "w", encoding="utf-8", newline="") as fh:
            registry.write_events_csv(events, fh)
        _write_json(self._path("bulk.json"), excluded.to_json())
        c.update(events_kept=len(events), bulk_batches_excluded=len(excluded.excluded_batches))

    def stage_bgp(self, c: Counter) -> None:
        index = bgp.ActivityIndex()
        for path in self.config.mrt:
            stats = MrtStats()
            try:
                bgp.index_activity(iter_mrt(path, stats), index)
            except (MrtError, CorruptInputError) as exc:
                raise StageError(f"{path}: {exc}") from exc
            if stats.truncated_at is not None:
                self.report.findings.append(f"{path}: truncated record at byte {stats.truncated_at}")
            c["mrt_records"] += stats.records
            c["mrt_updates"] += stats.updates
            c.update({f"mrt_skipped_{k}": v for k, v in stats.skipped.items()})
        with open(self._path("activity_index.csv"), "w", encoding="utf-8", newline="") as fh:
            bgp.write_index_csv(index, fh)
        c.update(prefixes=len(index.prefix_last_seen), asns=len(index.asn_last_seen))

    def stage_classify(self, c: Counter) -> None:
        self._require("groups.jsonl", "domains.jsonl")
        with open(self._path("groups.jsonl"), encoding="utf-8") as fh:
            hijackable = groups.read_groups_jsonl(fh)
        with open(self._path("domains.jsonl"), encoding="utf-8") as fh:
            records = {r.domain: r for r in whois.read_records_jsonl(fh)}
        reg_index = registry.RegistryIndex()
        if self._path("events.csv").exists():
            with open(self._path("events.csv"), encoding="utf-8", newline="") as fh:
                reg_index.update(registry.read_events_csv(fh))
        else:
            self.report.findings.append("no registry events; registry activity treated as absent")
        activity = bgp.ActivityIndex()
        if self._path("activity_index.csv").exists():
            with open(self._path("activity_index.csv"), encoding="utf-8", newline="") as fh:
                activity = bgp.read_index_csv(fh)
        else:
            self.report.findings.append("no BGP activity index; BGP activity treated as absent")
        th = self.config.thresholds()
        verdicts = []
        for g in hijackable:
            rec = records.get(g.domain)
            if rec is None:
                rec = whois.DomainRecord(g.domain, whois.DomainStatus.UNKNOWN, error="not queried")
            rv = classifier.classify(g, rec, reg_index.last_change(g),
                                     bgp.last_bgp_activity(g, activity, self.config.bgp_match), th)
            rv.check(th)
            verdicts.append(rv)
        with open(self._path("verdicts.jsonl"), "w", encoding="utf-8") as fh:
            classifier.write_verdicts_jsonl(verdicts, fh)
        with open(self._path("verdicts.csv"), "w", encoding="utf-8", newline="") as fh:
            classifier.write_verdicts_csv(verdicts, fh)
        c.update({f"verdict_{v.value}": n for v, n in sorted(Counter(rv.verdict for rv in verdicts).items())})

    def stage_report(self, c: Counter) -> None:
        self._require("verdicts.jsonl")
        with open(self._path("verdicts.jsonl"), encoding="utf-8") as fh:
            verdicts = classifier.read_verdicts_jsonl(fh)
        th = self.config.thresholds()
        summary = classifier.summarize(verdicts, th).to_json()
        _write_json(self._path("summary.json"), summary)
        self.report.summary = summary
        if self.report.cascade is None and self._path("cascade.json").exists():
            self.report.cascade = _read_json(self._path("cascade.json"))
        epoch = th.epoch
        sdir = self.out / "series"
        sdir.mkdir(exist_ok=True)
        cohorts = {
            "valid": [rv for rv in verdicts if rv.domain_status in
                      (whois.DomainStatus.VALID, whois.DomainStatus.EXPIRING_SOON)],
            "expired": [rv for rv in verdicts if rv.domain_status.is_expired],
        }
        for cohort, rvs in cohorts.items():
            series.emit_series(f"registry_{cohort}", registry.activity_cdf(
                classifier.time_since(epoch, rv.last_registry_change) for rv in rvs),
                sdir / f"registry_{cohort}.csv")
            series.emit_series(f"bgp_{cohort}", series.ecdf(
                classifier.time_since(epoch, rv.last_bgp_activity) for rv in rvs),
                sdir / f"bgp_{cohort}.csv")
            series.emit_series(f"combined_{cohort}", series.ecdf(
                rv.combined_inactivity for rv in rvs), sdir / f"combined_{cohort}.csv")
        c.update(verdicts=len(verdicts))

    # driver

    def run(self, stages=STAGES) -> RunReport:
        stages = [s for s in STAGES if s in set(stages)]
        self.config.validate(stages)
        self.out.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(self.out / ".hijackscan.lock"))
        try:
            lock.acquire(timeout=0)
        except Timeout:
            raise ConfigError(f"output directory {self.out} is locked by another run") from None
        try:
            for name in stages:
                stage: Callable[[Counter], None] = getattr(self, f"stage_{name}")
                counters: Counter = Counter()
                started = time.perf_counter()
                log.info("stage %s", name)
                try:
                    stage(counters)
                except (StageError, OSError, ValueError, AssertionError) as exc:
                    self.report.failed_stage = name
                    self.report.error = f"{type(exc).__name__}: {exc}"
                    log.error("stage %s failed: %s", name, exc)
                    break
                finally:
                    self.report.stages[name] = {
                        "counters": dict(sorted(counters.items())),
                        "seconds": round(time.perf_counter() - started, 3),
                    }
            _write_json(self.out / "run_report.json", self.report.to_json())
        finally:
            lock.release()
        return self.report


def run(config: RunConfig, stages=STAGES, **kwargs) -> RunReport:
    return Pipeline(config, **kwargs).run(stages)
