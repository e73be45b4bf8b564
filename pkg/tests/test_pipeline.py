import json
from datetime import date
from pathlib import Path

import pytest
from filelock import FileLock

from hijackscan import cli
from hijackscan.corpus import generate
from hijackscan.pipeline import (
    STAGES,
    ConfigError,
    Pipeline,
    RunConfig,
    load_config,
    parse_config,
    run,
)

from conftest import VELES_AUTNUM, VELES_INETNUM, VELES_MNTNER


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    expected = generate(root)
    return root, expected


def corpus_config(root: Path, out: Path) -> RunConfig:
    cfg = load_config(root / "hijackscan.conf", env={})
    cfg.out_dir = out
    return cfg


def read_verdicts(out: Path) -> dict:
    return {d["group_id"]: d["verdict"] for d in map(json.loads, (out / "verdicts.jsonl").open())}


# config

def test_parse_config_keys(tmp_path):
    cfg = parse_config("""
# comment
snapshot.2014-07-09 = b.db
snapshot.2013-09-01 = a.db
mrt = u1.mrt u2.mrt
mrt = u3.mrt
epoch = 2014-07-09
whois.offline = yes
whois.max_qps = 0.25
whois.server.ru = whois.example.ru
thresholds.maintained_days = 200
registry.bulk_threshold = 0.9
bgp.match = exact
""", tmp_path)
    assert [d for d, _ in cfg.snapshots] == [date(2013, 9, 1), date(2014, 7, 9)]
    assert cfg.snapshots[0][1] == tmp_path / "a.db"
    assert [p.name for p in cfg.mrt] == ["u1.mrt", "u2.mrt", "u3.mrt"]
    assert cfg.whois.offline and cfg.whois.max_qps == 0.25
    assert cfg.whois.server_for("ru") == "whois.example.ru"
    assert cfg.thresholds().maintained_window.days == 200
    assert cfg.bulk_threshold == 0.9 and cfg.bgp_match == "exact"


@pytest.mark.parametrize("text", ["nonsense", "colour = blue", "epoch = yesterday",
                                  "whois.offline = maybe", "whois.max_qps = fast"])
def test_bad_config_lines(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_env_overrides(tmp_path):
    cfg = load_config(None, env={"HIJACKSCAN_CACHE_DIR": str(tmp_path / "c"),
                                 "HIJACKSCAN_WHOIS_MAX_QPS": "3"})
    assert cfg.effective_cache_dir == tmp_path / "c"
    assert cfg.whois.max_qps == 3


def test_missing_mrt_rejected_before_any_work(tmp_path, corpus):
    root, _ = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.mrt = []
    with pytest.raises(ConfigError, match="MRT"):
        run(cfg)
    assert not (tmp_path / "out").exists()


def test_registry_needs_two_snapshots(tmp_path, corpus):
    root, _ = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.snapshots = cfg.snapshots[-1:]
    with pytest.raises(ConfigError):
        run(cfg, ["registry"])


def test_epoch_before_latest_snapshot_rejected(tmp_path, corpus):
    root, _ = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.epoch = date(2014, 1, 1)
    with pytest.raises(ConfigError, match="epoch"):
        run(cfg)


def test_bad_thresholds_rejected(tmp_path, corpus):
    root, _ = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.active_days = 400
    with pytest.raises(ConfigError):
        run(cfg)


# stages

def test_stats_only_single_snapshot(tmp_path):
    snap = tmp_path / "ripe.db"
    snap.write_text("\n".join([VELES_INETNUM, VELES_AUTNUM, VELES_MNTNER]))
    cfg = RunConfig(snapshots=[(date(2014, 7, 9), snap)], out_dir=tmp_path / "out")
    report = run(cfg, ["stats"])
    assert report.ok
    lines = (tmp_path / "out" / "stats.csv").read_text().splitlines()
    assert lines[0] == "object_class,total,with_domain_refs,percent"
    assert lines[-1].startswith("total,3,2,")


def test_full_run_matches_planted_truth(tmp_path, corpus):
    root, expected = corpus
    out = tmp_path / "out"
    report = run(corpus_config(root, out))
    assert report.ok, report.error
    assert json.loads((out / "cascade.json").read_text()) == expected["cascade"]
    assert read_verdicts(out) == expected["verdicts"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verdicts"]["Abandoned"] == expected["abandoned"]
    bulk = json.loads((out / "bulk.json").read_text())
    assert [{"date": b["date"], "object_class": b["object_class"]} for b in bulk] == expected["bulk_batches"]
    rr = json.loads((out / "run_report.json").read_text())
    assert rr["ok"] and set(rr["stages"]) == set(STAGES)
    assert all(v >= 0 for s in rr["stages"].values() for v in s["counters"].values())


def test_stage_restart_reproduces_products(tmp_path, corpus):
    root, _ = corpus
    out = tmp_path / "out"
    cfg = corpus_config(root, out)
    assert run(cfg).ok
    products = ["stats.csv", "groups.jsonl", "domains.jsonl", "events.csv", "activity_index.csv",
                "verdicts.jsonl", "verdicts.csv", "summary.json", "series/combined_expired.csv"]
    before = {p: (out / p).read_bytes() for p in products}
    for stage, product in [("classify", "verdicts.jsonl"), ("domains", "domains.jsonl"),
                           ("registry", "events.csv"), ("bgp", "activity_index.csv"),
                           ("report", "summary.json"), ("group", "groups.jsonl"), ("stats", "stats.csv")]:
        (out / product).unlink()
        assert run(corpus_config(root, out), [stage]).ok
        assert (out / product).read_bytes() == before[product]
    assert {p: (out / p).read_bytes() for p in products} == before


def test_downstream_stage_without_upstream_fails(tmp_path, corpus):
    root, _ = corpus
    report = run(corpus_config(root, tmp_path / "out"), ["classify"])
    assert not report.ok and report.failed_stage == "classify"
    assert "groups.jsonl" in report.error


def test_exact_match_mode_changes_covering_case(tmp_path, corpus):
    root, expected = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.bgp_match = "exact"
    assert run(cfg).ok
    got = read_verdicts(tmp_path / "out")
    changed = {k for k in got if got[k] != expected["verdicts"][k]}
    # only groups seen solely through a covering less-specific announcement lose their signal
    assert changed and all(expected["verdicts"][k] == "Maintained" and got[k] == "Indeterminate"
                           for k in changed)


def test_locked_output_dir(tmp_path, corpus):
    root, _ = corpus
    out = tmp_path / "out"
    out.mkdir()
    with FileLock(str(out / ".hijackscan.lock")):
        with pytest.raises(ConfigError, match="locked"):
            run(corpus_config(root, out))


def test_online_lookup_uses_transport_and_fills_cache(tmp_path, corpus):
    root, _ = corpus
    cfg = corpus_config(root, tmp_path / "out")
    cfg.cache_dir = tmp_path / "fresh_cache"
    cfg.whois.offline = False
    cfg.whois.max_qps = 1e6
    asked = []

    def transport(host, port, query, timeout):
        asked.append(query)
        return b"Registry Expiry Date: 2020-01-01T00:00:00Z\n"

    report = Pipeline(cfg, transport=transport).run(["group", "domains"])
    assert report.ok
    assert asked and all(q.endswith(b"\r\n") for q in asked)
    records = [json.loads(line) for line in (tmp_path / "out" / "domains.jsonl").open()]
    # no server is known for .invalid, so that one stays Unknown
    assert {r["domain"] for r in records if r["status"] != "Valid"} == {"nowhere-net.invalid"}
    asked.clear()
    assert Pipeline(cfg, transport=transport).run(["domains"]).ok
    assert asked == []


def test_corrupt_mrt_is_hard_stage_error(tmp_path, corpus):
    root, _ = corpus
    bad = tmp_path / "bad.mrt"
    bad.write_bytes(b"\x00" * 8 + b"\xff\xff\xff\xff" + b"\x00" * 20)
    cfg = corpus_config(root, tmp_path / "out")
    cfg.mrt = [bad]
    report = run(cfg, ["bgp"])
    assert report.failed_stage == "bgp"
    assert json.loads((tmp_path / "out" / "run_report.json").read_text())["failed_stage"] == "bgp"


# CLI

def test_cli_all_offline_exit_zero(tmp_path, corpus, capsys):
    root, expected = corpus
    rc = cli.main(["--config", str(root / "hijackscan.conf"), "--out", str(tmp_path / "o"),
                   "all", "--offline"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["Abandoned"]["groups"] == expected["abandoned"]["groups"]


def test_cli_run_all_flag(tmp_path, corpus):
    root, expected = corpus
    rc = cli.main(["run", "--all", "--offline", "--config", str(root / "hijackscan.conf"),
                   "--out", str(tmp_path / "o")])
    assert rc == 0
    assert read_verdicts(tmp_path / "o") == expected["verdicts"]


def test_cli_config_error_exit_two(tmp_path, capsys):
    assert cli.main(["--config", str(tmp_path / "missing.conf"), "stats"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_cli_stage_failure_exit_one(tmp_path, corpus):
    root, _ = corpus
    assert cli.main(["--config", str(root / "hijackscan.conf"), "--out", str(tmp_path / "o"),
                     "classify"]) == 1


def test_cli_epoch_override(tmp_path, corpus):
    root, _ = corpus
    out = tmp_path / "o"
    assert cli.main(["--config", str(root / "hijackscan.conf"), "--out", str(out),
                     "--epoch", "2016-01-01", "all"]) == 0
    # two years on, nothing planted is active any more
    assert "ExpiredButActive" not in set(read_verdicts(out).values())


def test_corpus_generation_is_deterministic(tmp_path):
    generate(tmp_path / "a")
    generate(tmp_path / "b")
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file() and ".lock" not in f.name:
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes(), f
