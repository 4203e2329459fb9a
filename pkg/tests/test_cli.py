import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from ccndcc import cli
from ccndcc import config as cfgmod
from ccndcc.engine import InvariantViolation
from ccndcc.experiment import GAIN_COLUMNS, METRIC_COLUMNS, SUMMARY_COLUMNS

TINY = {
    "version": 1,
    "topology": {"profile": "minimal", "K": 4, "node_count": 10},
    "levels": [{"files": 4, "users_per_cache": 2, "degree": 1},
               {"files": 8, "users_per_cache": 1, "degree": 2}],
    "files": 12, "memory": 3, "cs_sizes": [10], "lambdas": [1], "seeds": [1, 2],
    "slices": 6, "cooldown": 6,
}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- config ---------------------------------------------------------------------------

def test_defaults_are_the_reference_setup():
    c = cfgmod.ScenarioConfig()
    assert (c.files, c.chunks, c.K, c.memory, c.cs_sizes, c.slices) == (150, 12, 4, 30, [150], 60)
    assert c.topology["node_count"] == 20 and c.topology["link_capacity"] == 50
    assert c.seeds == [1, 2, 3, 4, 5]
    assert sum(lv["files"] for lv in c.levels) == 150


def test_round_trip(tmp_path):
    c = cfgmod.from_dict(TINY)
    cfgmod.save(c, tmp_path / "c.json")
    assert cfgmod.load(tmp_path / "c.json") == c


@settings(max_examples=40, deadline=None)
@given(lams=st.lists(st.one_of(st.integers(0, 12), st.lists(st.floats(0, 12), min_size=2, max_size=2)),
                     min_size=1, max_size=4),
       seeds=st.lists(st.integers(0, 99), min_size=1, max_size=5),
       cs=st.lists(st.integers(0, 300), min_size=1, max_size=3),
       policies=st.lists(st.sampled_from(["priority-lru", "lru", "lfu", "random"]), min_size=1, max_size=2),
       memory=st.floats(0, 40), recode=st.booleans())
def test_round_trip_property(lams, seeds, cs, policies, memory, recode):
    data = dict(TINY, lambdas=lams, seeds=seeds, cs_sizes=cs, policies=policies, memory=memory, recode=recode)
    c = cfgmod.from_dict(data)
    assert cfgmod.from_dict(json.loads(cfgmod.dumps(c))) == c


@pytest.mark.parametrize("patch,where", [
    ({"colour": 1}, "<root>"),
    ({"version": 2}, "version"),
    ({"seeds": [-1]}, "seeds.0"),
    ({"policies": ["fifo"]}, "policies.0"),
    ({"files": 13}, "files"),
    ({"lambdas": [[1, 2, 3]]}, "lambdas[0]"),
    ({"levels": [{"files": 12, "users_per_cache": 1, "degree": 3}]}, "levels: level 1: degree 3"),
    ({"topology": {"profile": "custom"}}, "topology"),
])
def test_bad_configs_name_the_field(patch, where):
    with pytest.raises(cfgmod.ConfigError, match=r"^" + where.replace("[", r"\[").replace("]", r"\]")):
        cfgmod.from_dict(dict(TINY, **patch))


def test_json_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "version": 1,\n  oops\n}')
    with pytest.raises(cfgmod.ConfigError, match="line 3"):
        cfgmod.load(p)


# -- command line -----------------------------------------------------------------------

def test_validate(tmp_path, capsys):
    assert cli.main(["validate", "--config", str(write(tmp_path, TINY))]) == 0
    assert "ok" in capsys.readouterr().out
    assert cli.main(["validate", "--config", str(write(tmp_path, {"version": 1, "x": 1}, "b.json"))]) == 2
    assert cli.main(["validate", "--config", str(tmp_path / "missing.json")]) == 2


def test_run_writes_the_three_reports(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(write(tmp_path, TINY)), "--out", str(out)]) == 0
    m, s, g = rows(out / "metrics.csv"), rows(out / "summary.csv"), rows(out / "gains.csv")
    assert tuple(m[0]) == METRIC_COLUMNS
    assert m[0] == ["slice", "mode", "lambda", "cs_size", "policy", "seed", "throughput", "delay_pkt",
                    "delay_req", "hit_ratio_interest", "hit_ratio_chunk", "tx_coded", "tx_uncoded"]
    assert tuple(s[0]) == SUMMARY_COLUMNS and tuple(g[0]) == GAIN_COLUMNS
    # 2 modes x 2 seeds x 12 slices
    assert len(m) == 1 + 2 * 2 * 12
    # per-seed rows plus one aggregate row per mode
    assert [r[4] for r in s[1:]] == ["1", "2", "1", "2", "all", "all"]
    assert len(g) == 2


def test_five_seeds_five_rows_plus_aggregate(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, TINY)
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--seeds", "1,2,3,4,5",
                     "--mode", "coded"]) == 0
    s = rows(out / "summary.csv")
    assert [r[4] for r in s[1:]] == ["1", "2", "3", "4", "5", "all"]
    assert rows(out / "gains.csv")[1:] == []


def test_single_run_summary_is_its_own_aggregate(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(write(tmp_path, TINY)), "--out", str(out), "--seeds", "3",
                     "--mode", "baseline"]) == 0
    head, one, agg = rows(out / "summary.csv")
    n = head.index("requests") + 1
    assert [float(x) for x in one[5:n]] == [float(x) for x in agg[5:n]]


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--scenario", "fig2a", "--seeds", "1"]) == 0
    assert (tmp_path / "env" / "gains.csv").exists()


@pytest.mark.parametrize("scenario,gain", [("fig2a", "2.0"), ("fig2b", "3.0")])
def test_micro_scenarios_report_their_gains(tmp_path, scenario, gain):
    out = tmp_path / scenario
    assert cli.main(["run", "--scenario", scenario, "--out", str(out), "--seeds", "1"]) == 0
    head, row = rows(out / "gains.csv")
    rec = dict(zip(head, row))
    assert rec["coding_gain"] == gain
    assert rec["baseline_server_tx"] == "24.0"


def test_exit_code_for_bad_config(tmp_path):
    assert cli.main(["run", "--config", str(write(tmp_path, dict(TINY, files=1)))]) == 2
    assert cli.main(["run", "--config", str(write(tmp_path, TINY)), "--seeds", "a,b"]) == 2


def test_exit_code_for_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["run", "--scenario", "fig2a", "--out", str(blocker / "sub")]) == 4


def test_exit_code_for_runtime_assertion(tmp_path, monkeypatch):
    def boom(cfg):
        raise InvariantViolation("cs_capacity")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", "--scenario", "fig2a", "--out", str(tmp_path)]) == 3


def test_same_seed_byte_identical_csv(tmp_path):
    cfg = write(tmp_path, TINY)
    for d in ("a", "b"):
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("metrics.csv", "summary.csv", "gains.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_workers_give_the_same_bytes(tmp_path):
    cfg = write(tmp_path, TINY)
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "serial")]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "pool"), "--workers", "2"]) == 0
    assert (tmp_path / "serial" / "metrics.csv").read_bytes() == (tmp_path / "pool" / "metrics.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ccndcc", "validate", "--config", str(write(tmp_path, TINY))],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
