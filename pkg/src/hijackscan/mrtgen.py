"""MRT encoder for synthetic update archives.

Kept separate from the decoder so each can check the other: it packs whole
fields with ``struct`` and shares no parsing code with :mod:`hijackscan.mrt`.
"""

from __future__ import annotations

import random
import struct
from typing import Iterable, Sequence

AS_TRANS = 23456


def _prefix_bytes(network: int, length: int) -> bytes:
    nbytes = (length + 7) // 8
    return bytes([length]) + network.to_bytes(4, "big")[:nbytes]


def _attr(type_code: int, value: bytes, flags: int = 0x40) -> bytes:
    if len(value) > 255:
        return struct.pack("!BBH", flags | 0x10, type_code, len(value)) + value
    return struct.pack("!BBB", flags, type_code, len(value)) + value


def _segments(path: Sequence[int], as_set: Sequence[int], width: int) -> bytes:
    code = "H" if width == 2 else "I"
    out = b""
    # sequence segments hold at most 255 members
    for i in range(0, len(path), 255):
        chunk = path[i:i + 255]
        out += struct.pack(f"!BB{len(chunk)}{code}", 2, len(chunk), *chunk)
    if as_set:
        out += struct.pack(f"!BB{len(as_set)}{code}", 1, len(as_set), *as_set)
    return out


def encode_update(timestamp: int, announced: Iterable[tuple[int, int]] = (),
                  withdrawn: Iterable[tuple[int, int]] = (), path: Sequence[int] = (),
                  as_set: Sequence[int] = (), *, as4: bool = True, extended_time: bool = False,
                  peer_as: int = 64496, mp_reach: bool = False) -> bytes:
    """One BGP4MP(_ET) MESSAGE record carrying a BGP UPDATE.

    With ``as4=False`` the AS_PATH is written with 2-byte members; if any
    member does not fit, AS_TRANS is substituted and the real path is sent
    in AS4_PATH, as a 2-byte speaker would.
    """
    withdrawn_blob = b"".join(_prefix_bytes(n, l) for n, l in withdrawn)
    nlri_blob = b"".join(_prefix_bytes(n, l) for n, l in announced)
    attrs = _attr(1, b"\x00", flags=0x40)  # ORIGIN IGP
    if as4:
        attrs += _attr(2, _segments(path, as_set, 4))
    else:
        needs4 = any(a > 0xFFFF for a in list(path) + list(as_set))
        short_path = [a if a <= 0xFFFF else AS_TRANS for a in path]
        short_set = [a if a <= 0xFFFF else AS_TRANS for a in as_set]
        attrs += _attr(2, _segments(short_path, short_set, 2))
        if needs4:
            attrs += _attr(17, _segments(path, as_set, 4), flags=0xC0)
    if mp_reach and nlri_blob:
        attrs += _attr(14, struct.pack("!HBB4sB", 1, 1, 4, b"\xc0\x00\x02\x01", 0) + nlri_blob,
                       flags=0x80)
        nlri_blob = b""
    attrs += _attr(3, b"\xc0\x00\x02\x01")  # NEXT_HOP
    update = (struct.pack("!H", len(withdrawn_blob)) + withdrawn_blob
              + struct.pack("!H", len(attrs)) + attrs + nlri_blob)
    bgp = b"\xff" * 16 + struct.pack("!HB", 19 + len(update), 2) + update
    if as4:
        peer = struct.pack("!IIHH4s4s", peer_as, 65000, 0, 1, b"\xc0\x00\x02\x01", b"\xc0\x00\x02\x02")
        subtype = 4
    else:
        peer = struct.pack("!HHHH4s4s", min(peer_as, 0xFFFF), 65000, 0, 1,
                           b"\xc0\x00\x02\x01", b"\xc0\x00\x02\x02")
        subtype = 1
    body = peer + bgp
    if extended_time:
        body = struct.pack("!I", 123456) + body
        return struct.pack("!IHHI", timestamp, 17, subtype, len(body)) + body
    return struct.pack("!IHHI", timestamp, 16, subtype, len(body)) + body


def encode_state_change(timestamp: int, old_state: int = 1, new_state: int = 6) -> bytes:
    body = struct.pack("!HHHH4s4sHH", 64496, 65000, 0, 1, b"\xc0\x00\x02\x01",
                       b"\xc0\x00\x02\x02", old_state, new_state)
    return struct.pack("!IHHI", timestamp, 16, 0, len(body)) + body


def encode_keepalive(timestamp: int) -> bytes:
    body = struct.pack("!IIHH4s4s", 64496, 65000, 0, 1, b"\xc0\x00\x02\x01", b"\xc0\x00\x02\x02")
    body += b"\xff" * 16 + struct.pack("!HB", 19, 4)
    return struct.pack("!IHHI", timestamp, 16, 4, len(body)) + body


def encode_table_dump(timestamp: int) -> bytes:
    body = b"\x00" * 20
    return struct.pack("!IHHI", timestamp, 13, 2, len(body)) + body


def encode_ipv6_update(timestamp: int) -> bytes:
    """An UPDATE whose only reachability is IPv6 MP_REACH."""
    nh = b"\x20\x01\x0d\xb8" + b"\x00" * 12
    mp = struct.pack("!HBB", 2, 1, 16) + nh + b"\x00" + bytes([32]) + b"\x20\x01\x0d\xb8"
    attrs = _attr(1, b"\x00") + _attr(2, _segments([64500], [], 4)) + _attr(14, mp, flags=0x80)
    update = struct.pack("!H", 0) + struct.pack("!H", len(attrs)) + attrs
    bgp = b"\xff" * 16 + struct.pack("!HB", 19 + len(update), 2) + update
    peer = struct.pack("!IIHH4s4s", 64496, 65000, 0, 1, b"\xc0\x00\x02\x01", b"\xc0\x00\x02\x02")
    body = peer + bgp
    return struct.pack("!IHHI", timestamp, 16, 4, len(body)) + body


def random_prefix(rnd: random.Random) -> tuple[int, int]:
    length = rnd.choice([8, 12, 16, 19, 20, 22, 23, 24, 24, 24, 25, 32, 0])
    net = rnd.getrandbits(32)
    if length < 32:
        net &= (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF
    return net, length


def random_update(rnd: random.Random, t0: int = 1_400_000_000) -> dict:
    """Parameters for a random well-formed update, as accepted by :func:`encode_update`."""
    announced = [random_prefix(rnd) for _ in range(rnd.randint(0, 6))]
    withdrawn = [random_prefix(rnd) for _ in range(rnd.randint(0 if announced else 1, 4))]
    big = rnd.random() < 0.3
    path = [rnd.randint(1, 0xFFFFFFFF if big else 0xFFFF) for _ in range(rnd.randint(1 if announced else 0, 8))]
    as_set = [rnd.randint(1, 0xFFFF) for _ in range(rnd.randint(1, 3))] if announced and rnd.random() < 0.15 else []
    return {
        "timestamp": t0 + rnd.randint(0, 80_000_000),
        "announced": announced,
        "withdrawn": withdrawn,
        "path": path if announced else [],
        "as_set": as_set,
        "as4": rnd.random() < 0.6,
        "extended_time": rnd.random() < 0.2,
        "mp_reach": rnd.random() < 0.1,
    }
