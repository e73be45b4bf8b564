"""Throughput harness for the snapshot parser and the MRT decoder.

Inputs are synthetic and built in memory before timing starts, so the numbers
measure parsing alone. Thresholds default to 100,000 objects/s and
200 MB/min and can be lowered or raised per machine.
"""

from __future__ import annotations

import random
import time

from . import mrtgen
from .mrt import MrtStats, iter_mrt
from .rpsl import ParseStats, parse_snapshot


def synthetic_snapshot(n: int, seed: int = 1) -> bytes:
    """``n`` registry objects in a realistic class mix."""
    rnd = random.Random(seed)
    parts = []
    for i in range(n):
        kind = rnd.random()
        mnt = f"MNT{rnd.randrange(n // 4 + 1)}-MNT"
        if kind < 0.45:
            a = rnd.getrandbits(24) << 8
            parts.append(
                f"inetnum:        {a >> 24}.{a >> 16 & 255}.{a >> 8 & 255}.0 - "
                f"{a >> 24}.{a >> 16 & 255}.{a >> 8 & 255}.255\n"
                f"netname:        NET-{i}\ndescr:          Customer network {i}\ncountry:        DE\n"
                f"admin-c:        AC{i}-RIPE\ntech-c:         TC{i}-RIPE\nstatus:         ASSIGNED PA\n"
                f"notify:         noc@isp{i % 5000}.example.com\nmnt-by:         {mnt}\n"
                f"source:         RIPE # Filtered\n")
        elif kind < 0.75:
            parts.append(
                f"person:         Person {i}\naddress:        Street {i}\naddress:        City\n"
                f"phone:          +49 30 {i:07d}\nnic-hdl:        P{i}-RIPE\nmnt-by:         {mnt}\n"
                f"source:         RIPE # Filtered\n")
        elif kind < 0.85:
            parts.append(
                f"aut-num:        AS{i}\nas-name:        AS-NAME-{i}\ndescr:          Operator {i}\n"
                f"import:         from AS{i + 1} accept ANY\nexport:         to AS{i + 1} announce AS{i}\n"
                f"notify:         peering@op{i % 3000}.example.net\nmnt-by:         {mnt}\n"
                f"source:         RIPE # Filtered\n")
        elif kind < 0.95:
            parts.append(
                f"route:          10.{i >> 8 & 255}.{i & 255}.0/24\ndescr:          Route {i}\n"
                f"origin:         AS{i}\nmnt-by:         {mnt}\nsource:         RIPE # Filtered\n")
        else:
            parts.append(
                f"mntner:         {mnt}\ndescr:          Maintainer\nadmin-c:        AC{i}-RIPE\n"
                f"upd-to:         hostmaster@isp{i % 5000}.example.com\nauth:           MD5-PW # Filtered\n"
                f"mnt-by:         {mnt}\nsource:         RIPE # Filtered\n")
    return "\n".join(parts).encode()


def synthetic_mrt(megabytes: float, seed: int = 1) -> bytes:
    rnd = random.Random(seed)
    target = int(megabytes * 1_000_000)
    # a pool of distinct records is repeated to reach the size cheaply
    pool = [mrtgen.encode_update(**mrtgen.random_update(rnd)) for _ in range(5000)]
    pool_bytes = b"".join(pool)
    reps = max(1, target // len(pool_bytes))
    return pool_bytes * reps


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def run_bench(objects: int = 200_000, mrt_mb: float = 50.0, *, min_objects_per_s: float = 100_000,
              min_mb_per_min: float = 200.0, repeat: int = 3) -> dict:
    snapshot = synthetic_snapshot(objects)
    stats = ParseStats()
    parse_snapshot(snapshot, None, stats)
    parse_s = _best_of(lambda: parse_snapshot(snapshot), repeat)

    archive = synthetic_mrt(mrt_mb)
    mstats = MrtStats()
    for _ in iter_mrt(archive, mstats):
        pass
    decode_s = _best_of(lambda: sum(1 for _ in iter_mrt(archive)), repeat)

    objects_per_s = stats.objects / parse_s
    mb_per_min = len(archive) / 1_000_000 / decode_s * 60
    return {
        "objects": stats.objects,
        "parse_seconds": round(parse_s, 3),
        "objects_per_s": round(objects_per_s),
        "mrt_bytes": len(archive),
        "mrt_records": mstats.records,
        "decode_seconds": round(decode_s, 3),
        "mb_per_min": round(mb_per_min, 1),
        "min_objects_per_s": min_objects_per_s,
        "min_mb_per_min": min_mb_per_min,
        "ok": objects_per_s >= min_objects_per_s and mb_per_min >= min_mb_per_min,
    }
