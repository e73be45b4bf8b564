import bz2
import gzip
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hijackscan.mrt import (
    AS_SEQUENCE,
    AS_SET,
    BgpUpdateRecord,
    MrtFrameError,
    MrtStats,
    Prefix,
    iter_mrt,
    parse_mrt,
    reconcile_paths,
)
from hijackscan.mrtgen import (
    encode_ipv6_update,
    encode_keepalive,
    encode_state_change,
    encode_table_dump,
    encode_update,
    random_update,
)

T = 1_404_864_000  # 2014-07-09
VELES = Prefix.parse("194.28.196.0/22")


def expected_record(params):
    return BgpUpdateRecord(
        params["timestamp"],
        tuple(Prefix(*p) for p in params["announced"]),
        tuple(Prefix(*p) for p in params["withdrawn"]),
        tuple(params["path"]) + tuple(params["as_set"]),
        bool(params["as_set"]),
    )


def test_empty_file():
    stats = MrtStats()
    assert parse_mrt(b"", stats) == []
    assert stats.records == 0 and stats.truncated_at is None


def test_single_announcement():
    blob = encode_update(T, [tuple(VELES)], path=[64500, 51016])
    (rec,) = parse_mrt(blob)
    assert rec == BgpUpdateRecord(T, (VELES,), (), (64500, 51016))
    assert str(rec.announced[0]) == "194.28.196.0/22"


@pytest.mark.parametrize("as4", [True, False])
@pytest.mark.parametrize("extended_time", [True, False])
def test_encodings(as4, extended_time):
    blob = encode_update(T, [tuple(VELES)], path=[64500, 51016], as4=as4, extended_time=extended_time)
    (rec,) = parse_mrt(blob)
    assert rec.as_path == (64500, 51016) and rec.timestamp == T


def test_as4_path_reconciliation():
    path = [64500, 4_200_000_001, 51016]
    (rec,) = parse_mrt(encode_update(T, [tuple(VELES)], path=path, as4=False))
    assert rec.as_path == tuple(path)


def test_reconcile_rules():
    two = [(AS_SEQUENCE, (1, 23456, 23456))]
    four = [(AS_SEQUENCE, (70000, 80000))]
    assert reconcile_paths(two, four) == [(AS_SEQUENCE, (1,)), (AS_SEQUENCE, (70000,)), (AS_SEQUENCE, (80000,))]
    # AS4_PATH longer than AS_PATH is ignored
    assert reconcile_paths([(AS_SEQUENCE, (1,))], four) == [(AS_SEQUENCE, (1,))]
    # an AS_SET counts as one element
    assert reconcile_paths([(AS_SEQUENCE, (1,)), (AS_SET, (2, 3))], [(AS_SET, (70000, 3))]) == \
        [(AS_SEQUENCE, (1,)), (AS_SET, (70000, 3))]


def test_as_set_flattened_and_flagged():
    (rec,) = parse_mrt(encode_update(T, [tuple(VELES)], path=[1, 2], as_set=[3, 4]))
    assert rec.as_path == (1, 2, 3, 4) and rec.as_set


def test_withdraw_only_and_mp_reach():
    (w,) = parse_mrt(encode_update(T, withdrawn=[tuple(VELES)]))
    assert w.withdrawn == (VELES,) and w.announced == () and w.as_path == ()
    (m,) = parse_mrt(encode_update(T, [tuple(VELES)], path=[1], mp_reach=True))
    assert m.announced == (VELES,)


def test_only_state_changes():
    blob = b"".join(encode_state_change(T + i) for i in range(5))
    stats = MrtStats()
    assert parse_mrt(blob, stats) == []
    assert stats.skipped_total == stats.records == 5


def test_non_update_records_skipped_and_counted():
    blob = (encode_keepalive(T) + encode_table_dump(T) + encode_ipv6_update(T)
            + encode_update(T, [tuple(VELES)], path=[1]))
    stats = MrtStats()
    recs = parse_mrt(blob, stats)
    assert len(recs) == 1
    assert stats.records == 4 and stats.skipped_total >= 3
    assert stats.skipped["bgp_type_4"] == 1 and stats.skipped["type_13"] == 1
    assert stats.skipped["no_ipv4_nlri"] == 1 and stats.skipped["mp_non_ipv4"] == 1


def test_truncated_trailing_record():
    blob = encode_update(T, [tuple(VELES)], path=[1]) * 2
    stats = MrtStats()
    recs = parse_mrt(blob[:-5], stats)
    assert len(recs) == 1 and stats.truncated_at == len(blob) // 2
    stats = MrtStats()
    parse_mrt(blob + b"\x00\x01", stats)
    assert stats.truncated_at == len(blob)


def test_implausible_length_is_frame_error():
    bad = struct.pack("!IHHI", T, 16, 4, 0x7FFFFFFF)
    good = encode_update(T, [tuple(VELES)], path=[1])
    with pytest.raises(MrtFrameError) as exc:
        parse_mrt(good + bad)
    assert exc.value.offset == len(good)


def test_malformed_record_skipped():
    good = encode_update(T, [tuple(VELES)], path=[1])
    broken = bytearray(good)
    broken[-4] = 40  # NLRI prefix length > 32
    stats = MrtStats()
    assert parse_mrt(bytes(broken) + good, stats) == parse_mrt(good)
    assert stats.skipped["malformed"] == 1


def test_host_bits_masked():
    (rec,) = parse_mrt(encode_update(T, [(0x0A0000FF, 24)], path=[1]))
    assert rec.announced == (Prefix(0x0A000000, 24),)


@pytest.mark.parametrize("compress", [gzip.compress, bz2.compress])
def test_compressed(compress):
    blob = encode_update(T, [tuple(VELES)], path=[1])
    assert len(parse_mrt(compress(blob))) == 1


def test_round_trip_random_batch():
    rnd = random.Random(7)
    params = [random_update(rnd) for _ in range(300)]
    blob = b"".join(encode_update(**p) for p in params)
    assert parse_mrt(blob) == [expected_record(p) for p in params]


def test_iter_is_lazy_per_record():
    blob = encode_update(T, [tuple(VELES)], path=[1]) + struct.pack("!IHHI", T, 16, 4, 1 << 30)
    it = iter_mrt(blob)
    assert next(it).announced == (VELES,)
    with pytest.raises(MrtFrameError):
        next(it)


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_decoder_total_on_random_bytes(data):
    try:
        parse_mrt(data)
    except MrtFrameError:
        pass
    except Exception as exc:  # declared failures only
        from hijackscan._io import CorruptInputError
        assert isinstance(exc, CorruptInputError)


def test_prefix_helpers():
    assert VELES.start == 0xC21CC400 and VELES.end == 0xC21CC7FF
    assert Prefix.parse("0.0.0.0/0").end == 0xFFFFFFFF
