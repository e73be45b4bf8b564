import sys
from datetime import date

import pytest

VELES_INETNUM = """\
inetnum:     194.28.196.0 - 194.28.199.255
netname:     UA-VELES
descr:       LLC "Unlimited Telecom"
descr:       Kyiv
notify:      internet@veles-isp.com.ua
mnt-by:      VELES-MNT
"""

VELES_AUTNUM = """\
aut-num:     AS51016
as-name:     VALES
descr:       LLC "Unlimited Telecom"
notify:      internet@veles-isp.com.ua
mnt-by:      VELES-MNT
"""

VELES_MNTNER = """\
mntner:      VELES-MNT
mnt-by:      VELES-MNT
"""

SNAPSHOT_DATE = date(2014, 7, 9)


@pytest.fixture
def veles_text() -> str:
    return "\n".join([VELES_INETNUM, VELES_AUTNUM, VELES_MNTNER])


@pytest.fixture
def veles_objects(veles_text):
    from hijackscan.rpsl import parse_snapshot

    return parse_snapshot(veles_text.encode(), SNAPSHOT_DATE)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
