import io
import socketserver
import threading
from datetime import date, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hijackscan.rpsl import DomainName
from hijackscan.whois import (
    UNREGISTERED,
    DomainRecord,
    DomainStatus,
    ExpiryParseError,
    RateLimiter,
    WhoisCache,
    WhoisClient,
    WhoisConfig,
    WhoisResponse,
    classify_domain,
    expiry_histogram,
    parse_expiry,
    read_records_jsonl,
    referral_of,
    write_records_jsonl,
)

EPOCH = date(2014, 7, 9)

RU_BODY = b"""% By submitting a query to RIPN's Whois Service
% you agree to abide by the following terms of use:

domain:        EXAMPLE-ISP.RU
nserver:       ns1.example-isp.ru.
state:         REGISTERED, DELEGATED, VERIFIED
org:           LLC Example
registrar:     RU-CENTER-REG-RIPN
admin-contact: https://www.nic.ru/whois
created:       2004.08.31
paid-till:     2014.09.01
free-date:     2014.10.02
source:        TCI

Last updated on 2014.07.09 13:26:31 MSK
"""

REGISTRY_BODY = b"""   Domain Name: EXAMPLE.COM
   Registrar: EXAMPLE REGISTRAR LLC
   Registrar WHOIS Server: whois.registrar.test
   Updated Date: 2013-08-14T07:01:44Z
   Creation Date: 1995-08-14T04:00:00Z
   Registry Expiry Date: 2015-08-13T04:00:00Z
"""

REGISTRAR_BODY = b"""Domain Name: EXAMPLE.COM
Registrar WHOIS Server: whois.registrar.test
Registrar Registration Expiration Date: 2015-08-13T04:00:00Z
Registrant Organization: Example Org
"""


class FakeTransport:
    def __init__(self, answers):
        self.answers = answers
        self.calls = []

    def __call__(self, host, port, query, timeout):
        self.calls.append((host, query))
        answer = self.answers[host]
        if isinstance(answer, list):
            answer = answer.pop(0)
        if isinstance(answer, Exception):
            raise answer
        return answer


class VirtualClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def clock(self):
        return self.now

    def sleep(self, dt):
        self.sleeps.append(dt)
        self.now += dt


def client(tmp_path, answers, **cfg):
    vc = VirtualClock()
    transport = FakeTransport(answers)
    c = WhoisClient(WhoisConfig(**cfg), WhoisCache(tmp_path / "cache"), transport=transport,
                    clock=vc.clock, sleep=vc.sleep, today=lambda: EPOCH)
    return c, transport, vc


# --- parse_expiry ------------------------------------------------------------------

def test_parse_ru_paid_till():
    assert parse_expiry(WhoisResponse("whois.tcinet.ru", RU_BODY), "ru") == date(2014, 9, 1)


def test_parse_empty():
    assert parse_expiry(WhoisResponse("x", b""), "com") is None


def test_parse_far_future_is_legal():
    body = b"Registry Expiry Date: 2108-01-01T00:00:00Z\n"
    assert parse_expiry(body, "com") == date(2108, 1, 1)


@pytest.mark.parametrize("line,tld,expected", [
    ("Registry Expiry Date: 2015-08-13T04:00:00Z", "com", date(2015, 8, 13)),
    ("Expiration Date: 13-aug-2015", "org", date(2015, 8, 13)),
    ("Expire Date: 2015-01-31", "it", date(2015, 1, 31)),
    ("expires:          2014-12-31 11:28:41+02", "ua", date(2014, 12, 31)),
    ("Renewal date:  01-Jan-2016", "uk", date(2016, 1, 1)),
    ("Expiry date:  01-Jan-2016", "uk", date(2016, 1, 1)),
    ("expire:         31.12.2014", "cz", date(2014, 12, 31)),
    ("Expires On: 2014/11/02", "info", date(2014, 11, 2)),
    ("paid-till: 2014-09-01T21:00:00Z", "ru", date(2014, 9, 1)),
])
def test_parse_formats(line, tld, expected):
    assert parse_expiry(f"header\n{line}\nfooter\n", tld) == expected


def test_pattern_order_prefers_registry_expiry():
    body = "Expiration Date: 2016-01-01\nRegistry Expiry Date: 2015-01-01\n"
    assert parse_expiry(body, "com") == date(2015, 1, 1)


@pytest.mark.parametrize("body", [
    "No match for \"GONE.COM\".\n", "NOT FOUND\n", "%% No entries found.\n",
    "% No entries found for the selected source(s).\n",
])
def test_parse_unregistered(body):
    assert parse_expiry(body, "com") is UNREGISTERED


def test_parse_unreadable_date_carries_line():
    with pytest.raises(ExpiryParseError) as exc:
        parse_expiry("Registry Expiry Date: someday soon\n", "com")
    assert "someday soon" in exc.value.line


@pytest.mark.parametrize("year", [1970, 1984, 2201, 2999])
def test_parse_clamp(year):
    with pytest.raises(ExpiryParseError):
        parse_expiry(f"Registry Expiry Date: {year}-01-01\n", "com")


@settings(max_examples=200)
@given(st.text(max_size=300))
def test_parse_never_out_of_range(text):
    try:
        result = parse_expiry(text, "com")
    except ExpiryParseError:
        return
    if isinstance(result, date):
        assert 1985 <= result.year <= 2200


# --- classify_domain -----------------------------------------------------------------

def test_classify_boundaries():
    assert classify_domain(EPOCH - timedelta(days=1), EPOCH) is DomainStatus.EXPIRED
    assert classify_domain(EPOCH, EPOCH) is DomainStatus.EXPIRING_SOON
    assert classify_domain(EPOCH + timedelta(days=7), EPOCH) is DomainStatus.EXPIRING_SOON
    assert classify_domain(EPOCH + timedelta(days=8), EPOCH) is DomainStatus.VALID
    assert classify_domain(None, EPOCH) is DomainStatus.UNKNOWN
    assert classify_domain(None, EPOCH, unregistered=True) is DomainStatus.UNREGISTERED
    assert DomainStatus.UNREGISTERED.is_expired and DomainStatus.EXPIRED.is_expired


def test_classify_fourteen_years_expired():
    assert classify_domain(date(2000, 8, 1), EPOCH) is DomainStatus.EXPIRED


@given(st.one_of(st.none(), st.dates()), st.dates(max_value=date(9000, 1, 1)))
def test_classify_total_and_consistent(expiry, epoch):
    status = classify_domain(expiry, epoch)
    if status is DomainStatus.EXPIRED:
        assert expiry < epoch
    elif status is DomainStatus.EXPIRING_SOON:
        assert epoch <= expiry <= epoch + timedelta(days=7)
    elif status is DomainStatus.UNKNOWN:
        assert expiry is None
    else:
        assert expiry > epoch + timedelta(days=7)


# --- cache and client ----------------------------------------------------------------

def test_cache_round_trip_byte_identical(tmp_path):
    cache = WhoisCache(tmp_path)
    body = b"\x00binary\r\nRegistry Expiry Date: 2015-01-01\xff"
    cache.put("x.com", EPOCH, WhoisResponse("whois.test", body))
    again = WhoisCache(tmp_path).get("x.com")[0]
    assert again.body == body and again.server == "whois.test"
    assert (tmp_path / "index.tsv").exists()


def test_cache_newest_entry_and_exact_day(tmp_path):
    cache = WhoisCache(tmp_path)
    cache.put("x.com", date(2014, 1, 1), WhoisResponse("s", b"old"))
    cache.put("x.com", date(2014, 2, 1), WhoisResponse("s", b"new"))
    assert cache.get("x.com")[0].body == b"new"
    assert cache.get("x.com", date(2014, 1, 1))[0].body == b"old"
    assert cache.get("x.com", date(2014, 3, 1)) is None


def test_cache_hit_does_no_io(tmp_path):
    c, transport, _ = client(tmp_path, {})
    c.cache.put("veles-isp.com.ua", EPOCH, WhoisResponse("whois.ua", b"expires: 2013-01-01\n"))
    resp = c.query(DomainName("veles-isp.com.ua"))
    assert resp.body == b"expires: 2013-01-01\n"
    assert transport.calls == []


def test_query_writes_through_and_requery_identical(tmp_path):
    c, transport, _ = client(tmp_path, {"whois.tcinet.ru": RU_BODY})
    first = c.query(DomainName("example-isp.ru"))
    second = c.query(DomainName("example-isp.ru"))
    assert first.body == second.body == RU_BODY
    assert len(transport.calls) == 1
    assert transport.calls[0] == ("whois.tcinet.ru", b"example-isp.ru\r\n")


def test_unknown_tld_is_soft(tmp_path):
    c, _, _ = client(tmp_path, {})
    rec = c.lookup(DomainName("thing.invalid"), EPOCH)
    assert rec.status is DomainStatus.UNKNOWN and "no WHOIS server" in rec.error


def test_offline_miss_is_unknown(tmp_path):
    c, transport, _ = client(tmp_path, {"whois.tcinet.ru": RU_BODY}, offline=True)
    rec = c.lookup(DomainName("example-isp.ru"), EPOCH)
    assert rec.status is DomainStatus.UNKNOWN
    assert transport.calls == []


def test_referral_followed_once(tmp_path):
    c, transport, _ = client(tmp_path, {"whois.verisign-grs.com": REGISTRY_BODY,
                                        "whois.registrar.test": REGISTRAR_BODY})
    resp = c.query(DomainName("example.com"))
    assert resp.body == REGISTRAR_BODY and resp.server == "whois.registrar.test"
    assert [h for h, _ in transport.calls] == ["whois.verisign-grs.com", "whois.registrar.test"]


def test_referral_limit(tmp_path):
    answers = {
        "whois.verisign-grs.com": b"Registrar WHOIS Server: a.test\n",
        "a.test": b"Registrar WHOIS Server: b.test\n",
        "b.test": b"Registrar WHOIS Server: c.test\n",
        "c.test": b"never reached\n",
    }
    c, transport, _ = client(tmp_path, answers)
    resp = c.query(DomainName("x.com"))
    assert resp.server == "b.test"
    assert len(transport.calls) == 3


def test_referral_parsing():
    assert referral_of(b"Registrar WHOIS Server: whois://WHOIS.Foo.test/\n") == "whois.foo.test"
    assert referral_of(b"nothing here") is None


def test_transient_retry_with_backoff(tmp_path):
    answers = {"whois.verisign-grs.com": [ConnectionRefusedError(), TimeoutError(), REGISTRY_BODY],
               "whois.registrar.test": REGISTRAR_BODY}
    c, transport, vc = client(tmp_path, answers, max_qps=1000)
    c.query(DomainName("example.com"))
    backoffs = [s for s in vc.sleeps if s >= 1]
    assert backoffs == [2.0, 4.0]


def test_transient_exhaustion(tmp_path):
    c, transport, vc = client(tmp_path, {"whois.verisign-grs.com": [OSError()] * 10},
                              max_retries=3, max_qps=1000)
    rec = c.lookup(DomainName("example.com"), EPOCH)
    assert rec.status is DomainStatus.UNKNOWN and "after 3 retries" in rec.error
    assert len(transport.calls) == 4


def test_rate_limit_response_backs_off(tmp_path):
    limited = b"WHOIS LIMIT EXCEEDED - SEE WWW.PIR.ORG/WHOIS FOR DETAILS\n"
    c, transport, vc = client(tmp_path, {"whois.pir.org": [limited, limited, b"Registry Expiry Date: 2020-01-01\n"]})
    rec = c.lookup(DomainName("x.org"), EPOCH)
    assert rec.status is DomainStatus.VALID
    assert c.stats["rate_limited"] == 2


def test_rate_limit_exhaustion(tmp_path):
    limited = b"Too many requests\n"
    c, _, _ = client(tmp_path, {"whois.pir.org": [limited] * 3}, max_retries=2)
    rec = c.lookup(DomainName("x.org"), EPOCH)
    assert rec.error and "rate-limited" in rec.error


def test_lookup_classifies(tmp_path):
    c, _, _ = client(tmp_path, {
        "whois.tcinet.ru": RU_BODY,
        "whois.verisign-grs.com": b'No match for "GONE.COM".\n',
        "whois.nic.it": b"Expire Date: 2014-07-01\n",
    })
    assert c.lookup(DomainName("example-isp.ru"), EPOCH).status is DomainStatus.VALID
    gone = c.lookup(DomainName("gone.com"), EPOCH)
    assert gone.status is DomainStatus.UNREGISTERED and gone.expiry_date is None
    old = c.lookup(DomainName("old.it"), EPOCH)
    assert old.status is DomainStatus.EXPIRED and old.expiry_date == date(2014, 7, 1)
    assert old.raw_source.startswith("objects/")


def test_server_override(tmp_path):
    c, transport, _ = client(tmp_path, {"whois.local.test": RU_BODY},
                             servers={"ru": "whois.local.test"})
    c.query(DomainName("example-isp.ru"))
    assert transport.calls[0][0] == "whois.local.test"


# --- rate limiter -------------------------------------------------------------------

@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.floats(0, 3)), max_size=40),
       st.sampled_from([0.5, 1.0, 2.0, 5.0]))
def test_rate_limiter_virtual_clock(schedule, qps):
    vc = VirtualClock()
    limiter = RateLimiter(qps, vc.clock, vc.sleep)
    issued = {}
    for server, gap in schedule:
        vc.now += gap
        slot = limiter.acquire(server)
        assert vc.now >= slot
        issued.setdefault(server, []).append(slot)
    for times in issued.values():
        for t in times:
            in_window = [u for u in times if t <= u < t + 1.0]
            assert len(in_window) <= max(1, qps)


def test_default_rate_is_one_query_per_two_seconds(tmp_path):
    c, _, vc = client(tmp_path, {"whois.tcinet.ru": RU_BODY, "whois.nic.it": RU_BODY})
    c.query(DomainName("a.ru"))
    c.query(DomainName("b.ru"))
    assert vc.now == pytest.approx(2.0)
    c.query(DomainName("c.it"))  # another server is not delayed
    assert vc.now == pytest.approx(2.0)


# --- real socket round trip ----------------------------------------------------------

class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        query = self.rfile.readline()
        self.server.queries.append(query)
        self.wfile.write(self.server.answers[query.strip().decode()])


def test_tcp_transport_against_local_server(tmp_path):
    srv = socketserver.ThreadingTCPServer(("127.0.0.1", 0), _Handler)
    srv.queries, srv.answers = [], {"example-isp.ru": RU_BODY}
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    try:
        cfg = WhoisConfig(servers={"ru": "127.0.0.1"}, port=srv.server_address[1], max_qps=100)
        c = WhoisClient(cfg, WhoisCache(tmp_path), today=lambda: EPOCH)
        rec = c.lookup(DomainName("example-isp.ru"), EPOCH)
    finally:
        srv.shutdown()
        srv.server_close()
    assert srv.queries == [b"example-isp.ru\r\n"]
    assert rec.expiry_date == date(2014, 9, 1)


# --- histogram --------------------------------------------------------------------

def rec(name, status, expiry=None):
    return DomainRecord(DomainName(name), status, expiry)


def test_histogram_small():
    h = expiry_histogram([
        rec("a.ru", DomainStatus.EXPIRED, date(2014, 1, 1)),
        rec("b.ru", DomainStatus.VALID, date(2015, 1, 1)),
        rec("c.com", DomainStatus.VALID, date(2015, 1, 1)),
    ])
    assert [(t, str(p)) for t, _, p in h.tlds_all] == [("ru", "66.67"), ("com", "33.33")]
    assert [(t, str(p)) for t, _, p in h.tlds_expired] == [("ru", "100.00")]
    assert h.by_date == [(date(2014, 1, 1), 1), (date(2015, 1, 1), 2)]


def test_histogram_empty():
    h = expiry_histogram([])
    assert h.by_date == [] and h.tlds_all == [] and h.tlds_expired == []


def test_records_jsonl_round_trip():
    records = [rec("a.ru", DomainStatus.EXPIRED, date(2014, 1, 1)), rec("b.com", DomainStatus.UNKNOWN)]
    buf = io.StringIO()
    write_records_jsonl(records, buf)
    buf.seek(0)
    assert read_records_jsonl(buf) == records
