"""Decoder for MRT-framed BGP update archives (BGP4MP / BGP4MP_ET).

Only UPDATE messages are turned into records; everything else is counted and
skipped. IPv6 reachability is skipped as well.
"""

from __future__ import annotations

import ipaddress
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

from ._io import Source, read_all

# MRT types
BGP4MP = 16
BGP4MP_ET = 17

# BGP4MP subtypes
STATE_CHANGE = 0
MESSAGE = 1
MESSAGE_AS4 = 4
STATE_CHANGE_AS4 = 5
MESSAGE_LOCAL = 6
MESSAGE_AS4_LOCAL = 7
_MESSAGE_SUBTYPES = {MESSAGE: False, MESSAGE_AS4: True, MESSAGE_LOCAL: False, MESSAGE_AS4_LOCAL: True}

# BGP message types and path attributes
BGP_UPDATE = 2
ATTR_AS_PATH = 2
ATTR_MP_REACH = 14
ATTR_MP_UNREACH = 15
ATTR_AS4_PATH = 17

AS_SET = 1
AS_SEQUENCE = 2
AS_CONFED_SEQUENCE = 3
AS_CONFED_SET = 4

AFI_IPV4 = 1
AFI_IPV6 = 2

MRT_HEADER = struct.Struct(">IHHI")
# extended-length BGP messages top out at 65535 bytes; anything far beyond
# that is a framing error, not a record
MAX_RECORD_LEN = 1 << 17

_U16 = struct.Struct(">H")


class Prefix(NamedTuple):
    """IPv4 CIDR prefix as (network address int, length)."""

    network: int
    length: int

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        net = ipaddress.IPv4Network(text, strict=False)
        return cls(int(net.network_address), net.prefixlen)

    @property
    def start(self) -> int:
        return self.network

    @property
    def end(self) -> int:
        return self.network | ((1 << (32 - self.length)) - 1)

    def __str__(self) -> str:
        return f"{ipaddress.IPv4Address(self.network)}/{self.length}"


@dataclass(frozen=True)
class BgpUpdateRecord:
    timestamp: int
    announced: tuple[Prefix, ...]
    withdrawn: tuple[Prefix, ...]
    as_path: tuple[int, ...]
    # AS_SET members were flattened into as_path
    as_set: bool = False
    peer_as: int | None = field(default=None, compare=False)


class MrtError(Exception):
    pass


class MrtFrameError(MrtError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class _Malformed(Exception):
    pass


@dataclass
class MrtStats:
    records: int = 0
    updates: int = 0
    skipped: Counter = field(default_factory=Counter)
    truncated_at: int | None = None

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())


def _prefixes(buf: bytes, pos: int, end: int, out: list) -> None:
    append = out.append
    from_bytes = int.from_bytes
    while pos < end:
        plen = buf[pos]
        if plen > 32:
            raise _Malformed("prefix length > 32")
        nbytes = (plen + 7) >> 3
        pos += 1
        if pos + nbytes > end:
            raise _Malformed("prefix overruns field")
        raw = from_bytes(buf[pos:pos + nbytes], "big") << (32 - 8 * nbytes)
        if plen < 32:
            raw &= ~((1 << (32 - plen)) - 1) & 0xFFFFFFFF
        append(Prefix(raw, plen))
        pos += nbytes


def _as_path(buf: bytes, pos: int, end: int, width: int) -> list[tuple[int, tuple[int, ...]]]:
    segments = []
    fmt = ">%dH" if width == 2 else ">%dI"
    while pos < end:
        if pos + 2 > end:
            raise _Malformed("AS_PATH segment header")
        seg_type, count = buf[pos], buf[pos + 1]
        pos += 2
        size = count * width
        if pos + size > end:
            raise _Malformed("AS_PATH segment overruns attribute")
        if seg_type not in (AS_SET, AS_SEQUENCE, AS_CONFED_SEQUENCE, AS_CONFED_SET):
            raise _Malformed(f"AS_PATH segment type {seg_type}")
        segments.append((seg_type, struct.unpack_from(fmt % count, buf, pos)))
        pos += size
    return segments


def _path_units(segments) -> list[tuple[int, tuple[int, ...]]]:
    """Path elements as counted for AS4_PATH merging: each sequence member and
    each whole AS_SET is one unit; confederation segments count for nothing."""
    units = []
    for seg_type, asns in segments:
        if seg_type == AS_SEQUENCE:
            units.extend((AS_SEQUENCE, (a,)) for a in asns)
        elif seg_type == AS_SET:
            units.append((AS_SET, asns))
    return units


def reconcile_paths(as_path, as4_path) -> list[tuple[int, tuple[int, ...]]]:
    """Combine a 2-byte AS_PATH with AS4_PATH: the AS4_PATH replaces the
    trailing part of equal length, unless it is the longer of the two."""
    units2 = _path_units(as_path)
    if as4_path is None:
        return units2
    units4 = _path_units(as4_path)
    if len(units2) < len(units4):
        return units2
    return units2[:len(units2) - len(units4)] + units4


def _update(buf: bytes, pos: int, end: int, as4: bool, stats: MrtStats):
    if pos + 2 > end:
        raise _Malformed("withdrawn length")
    wlen = _U16.unpack_from(buf, pos)[0]
    pos += 2
    if pos + wlen + 2 > end:
        raise _Malformed("withdrawn routes overrun")
    withdrawn: list = []
    _prefixes(buf, pos, pos + wlen, withdrawn)
    pos += wlen
    alen = _U16.unpack_from(buf, pos)[0]
    pos += 2
    aend = pos + alen
    if aend > end:
        raise _Malformed("path attributes overrun")
    announced: list = []
    as_path = as4_path = None
    while pos < aend:
        if pos + 3 > aend:
            raise _Malformed("attribute header")
        flags, atype = buf[pos], buf[pos + 1]
        if flags & 0x10:
            if pos + 4 > aend:
                raise _Malformed("attribute header")
            length = _U16.unpack_from(buf, pos + 2)[0]
            pos += 4
        else:
            length = buf[pos + 2]
            pos += 3
        vend = pos + length
        if vend > aend:
            raise _Malformed("attribute overruns")
        if atype == ATTR_AS_PATH:
            as_path = _as_path(buf, pos, vend, 4 if as4 else 2)
        elif atype == ATTR_AS4_PATH:
            as4_path = _as_path(buf, pos, vend, 4)
        elif atype == ATTR_MP_REACH or atype == ATTR_MP_UNREACH:
            if pos + 3 > vend:
                raise _Malformed("MP attribute header")
            afi, safi = _U16.unpack_from(buf, pos)[0], buf[pos + 2]
            if afi != AFI_IPV4 or safi not in (1, 2):
                stats.skipped["mp_non_ipv4"] += 1
            elif atype == ATTR_MP_REACH:
                if pos + 4 > vend:
                    raise _Malformed("MP_REACH next hop")
                nh_end = pos + 4 + buf[pos + 3]
                if nh_end + 1 > vend:
                    raise _Malformed("MP_REACH next hop overrun")
                _prefixes(buf, nh_end + 1, vend, announced)
            else:
                _prefixes(buf, pos + 3, vend, withdrawn)
        pos = vend
    _prefixes(buf, aend, end, announced)
    if as_path is None:
        as_path = []
    units = reconcile_paths(as_path, None if as4 else as4_path)
    path = []
    has_set = False
    for seg_type, asns in units:
        if seg_type == AS_SET:
            has_set = True
        path.extend(asns)
    return announced, withdrawn, path, has_set


def iter_mrt(source: Source, stats: MrtStats | None = None) -> Iterator[BgpUpdateRecord]:
    """Yield one record per UPDATE carrying IPv4 announcements or withdrawals.

    A truncated trailing record ends iteration and is noted in ``stats``; a record
    length too large to be real raises :class:`MrtFrameError`.
    """
    buf = read_all(source)
    if stats is None:
        stats = MrtStats()
    n = len(buf)
    off = 0
    unpack_header = MRT_HEADER.unpack_from
    while off < n:
        if off + 12 > n:
            stats.truncated_at = off
            break
        ts, mtype, subtype, length = unpack_header(buf, off)
        if length > MAX_RECORD_LEN:
            raise MrtFrameError(f"implausible MRT record length {length}", off)
        body = off + 12
        end = body + length
        if end > n:
            stats.truncated_at = off
            break
        off = end
        stats.records += 1
        if mtype != BGP4MP and mtype != BGP4MP_ET:
            stats.skipped[f"type_{mtype}"] += 1
            continue
        as4 = _MESSAGE_SUBTYPES.get(subtype)
        if as4 is None:
            stats.skipped["state_change" if subtype in (STATE_CHANGE, STATE_CHANGE_AS4)
                          else f"subtype_{subtype}"] += 1
            continue
        pos = body + 4 if mtype == BGP4MP_ET else body
        try:
            asw = 4 if as4 else 2
            hdr = pos + 2 * asw + 4
            if hdr > end:
                raise _Malformed("BGP4MP header")
            peer_as = int.from_bytes(buf[pos:pos + asw], "big")
            afi = _U16.unpack_from(buf, hdr - 2)[0]
            if afi == AFI_IPV4:
                pos = hdr + 8
            elif afi == AFI_IPV6:
                pos = hdr + 32
            else:
                raise _Malformed(f"peer AFI {afi}")
            if pos + 19 > end:
                raise _Malformed("BGP header")
            msg_len = _U16.unpack_from(buf, pos + 16)[0]
            msg_type = buf[pos + 18]
            if msg_len < 19 or pos + msg_len > end:
                raise _Malformed("BGP message length")
            if msg_type != BGP_UPDATE:
                stats.skipped["bgp_type_%d" % msg_type] += 1
                continue
            announced, withdrawn, path, has_set = _update(buf, pos + 19, pos + msg_len, as4, stats)
        except (_Malformed, struct.error, IndexError):
            stats.skipped["malformed"] += 1
            continue
        if not announced and not withdrawn:
            stats.skipped["no_ipv4_nlri"] += 1
            continue
        stats.updates += 1
        yield BgpUpdateRecord(ts, tuple(announced), tuple(withdrawn), tuple(path), has_set, peer_as)


def parse_mrt(source: Source, stats: MrtStats | None = None) -> list[BgpUpdateRecord]:
    return list(iter_mrt(source, stats))
