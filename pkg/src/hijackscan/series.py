"""Empirical distribution series and their plot-ready CSV form."""

from __future__ import annotations

import csv
import os
from collections import Counter
from datetime import date, timedelta
from typing import Hashable, Iterable, Sequence

NEVER = "never"

# series kind -> distribution type
KINDS = {
    "group_sizes": "ccdf",
    "expiry_dates": "cdf",
    "registry_valid": "cdf",
    "registry_expired": "cdf",
    "bgp_valid": "cdf",
    "bgp_expired": "cdf",
    "combined_valid": "cdf",
    "combined_expired": "cdf",
}


class SeriesContractError(ValueError):
    pass


def ecdf(values: Iterable) -> list[tuple[object, float]]:
    """Empirical CDF as ``(value, P(X <= value))`` at each distinct value.

    ``None`` entries stand for "never" and are collected in a final
    :data:`NEVER` bucket that sorts after every finite value.
    """
    values = list(values)
    n = len(values)
    if n == 0:
        return []
    counts = Counter(v for v in values if v is not None)
    never = n - sum(counts.values())
    out = []
    running = 0
    for v in sorted(counts):
        running += counts[v]
        out.append((v, running / n))
    if never:
        out.append((NEVER, 1.0))
    return out


def ccdf(values: Iterable[Hashable]) -> list[tuple[object, float]]:
    """Complementary CDF as ``(value, P(X >= value))`` for strictly increasing values."""
    values = list(values)
    n = len(values)
    if n == 0:
        return []
    counts = Counter(values)
    out = []
    remaining = n
    for v in sorted(counts):
        out.append((v, remaining / n))
        remaining -= counts[v]
    return out


def _format_x(x) -> str:
    if isinstance(x, timedelta):
        return f"{x / timedelta(days=1):.6f}".rstrip("0").rstrip(".")
    if isinstance(x, date):
        return x.isoformat()
    return str(x)


def emit_series(kind: str, data: Sequence[tuple[object, float]], path: str | os.PathLike) -> None:
    """Write a series as ``x,fraction`` CSV preceded by a ``# kind=...`` line.

    Durations are written in days. The fraction column is checked before anything
    is written: nondecreasing for CDFs, nonincreasing for CCDFs, within [0, 1].
    """
    shape = KINDS.get(kind)
    if shape is None:
        raise SeriesContractError(f"unknown series kind {kind!r}")
    fractions = [f for _, f in data]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise SeriesContractError(f"{kind}: fraction outside [0, 1]")
    pairs = list(zip(fractions, fractions[1:]))
    if shape == "cdf" and any(b < a for a, b in pairs):
        raise SeriesContractError(f"{kind}: CDF fractions must be nondecreasing")
    if shape == "ccdf" and any(b > a for a, b in pairs):
        raise SeriesContractError(f"{kind}: CCDF fractions must be nonincreasing")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# kind={kind} ({shape})\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "fraction"))
        for x, f in data:
            w.writerow((_format_x(x), repr(float(f))))


def read_series(path: str | os.PathLike) -> tuple[str, list[tuple[str, float]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        kind = first[len("# kind="):].split(" ", 1)[0] if first.startswith("# kind=") else ""
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "fraction"]:
        raise SeriesContractError(f"{path}: missing header")
    return kind, [(x, float(f)) for x, f in rows[1:]]
