import csv
import math

import numpy as np
import pytest

from mica import ConfigError, TooManyFailures, load_config
from mica import harness
from mica.harness import ExperimentConfig, ReplicationResult, parse_config, run_replication

BASIC = """\
[design]
design = mica-ex1
p = 3
n = 120
dist = t3

[method]
method = mica
n_starts = 5

[run]
replications = 3
base_seed = 40
"""

GROUPED = """\
[design]
design = gmica-ex1
p = 6
n = 150

[method]
method = gmica-alg1
h0 = 2
n_starts = 4
max_outer = 2

[run]
replications = 2
"""


# config parsing -------------------------------------------------------------

def test_parse_basic():
    cfg = parse_config(BASIC)
    assert (cfg.design, cfg.p, cfg.n, cfg.dist) == ("mica-ex1", 3, 120, "t3")
    assert (cfg.method, cfg.h0, cfg.n_starts, cfg.replications, cfg.base_seed) == (
        "mica", 1, 5, 3, 40)
    assert cfg.setting == "mica-ex1/t3/p=3/n=120/mica/h0=1"
    assert not cfg.grouped


def test_overrides_replace_file_values():
    cfg = parse_config(BASIC, h0=3, replications=None, base_seed=7)
    assert (cfg.h0, cfg.replications, cfg.base_seed) == (3, 3, 7)


@pytest.mark.parametrize("text,line,fragment", [
    (BASIC.replace("p = 3", "p = three"), 3, "p expects int"),
    (BASIC.replace("n_starts = 5", "colour = red"), 9, "unknown key 'colour'"),
    (BASIC + "\n[extra]\nx = 1\n", 15, "unknown section [extra]"),
    (BASIC.replace("[method]", "[method]\njunk line"), 8, "cannot parse"),
])
def test_parse_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text, "bench.ini")
    msg = str(err.value)
    assert msg.startswith(f"bench.ini: line {line}:")
    assert fragment in msg


def test_missing_and_invalid_values():
    with pytest.raises(ConfigError, match="missing required key 'method'"):
        parse_config(BASIC.replace("method = mica\n", ""))
    with pytest.raises(ConfigError, match="unknown method"):
        parse_config(BASIC.replace("method = mica", "method = pca"))
    with pytest.raises(ConfigError):
        parse_config(BASIC.replace("replications = 3", "replications = 0"))
    with pytest.raises(ConfigError):
        parse_config(BASIC.replace("p = 3", "p = 4").replace("mica-ex1", "gmica-ex1"))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot open"):
        load_config(tmp_path / "absent.ini")


# replications ---------------------------------------------------------------

def test_single_replication_uses_base_seed_offset():
    cfg = parse_config(BASIC)
    r = run_replication(cfg, 2)
    assert r.seed == 42 and r.index == 2
    assert 0.0 <= r.distance <= 1.0
    assert r.groups_found == (1, 1, 1) and r.correct is None
    assert r.converged is not None and r.error is None
    again = run_replication(cfg, 2)
    assert again.distance == r.distance


def test_grouped_replication_fields():
    cfg = parse_config(GROUPED)
    r = run_replication(cfg, 0)
    assert sum(r.groups_found) == 6
    assert r.correct == (r.groups_found == (3, 2, 1))
    assert 1 <= r.iterations <= 2
    assert math.isnan(r.distance) != bool(r.correct)


def test_experiment_serial_equals_parallel():
    cfg = parse_config(BASIC)
    serial = harness.run_experiment(cfg, workers=1)
    parallel = harness.run_experiment(cfg, workers=2)
    assert [r.distance for r in serial.replications] == [r.distance for r in parallel.replications]
    assert serial.mean_distance == parallel.mean_distance
    d = [r.distance for r in serial.replications]
    assert serial.mean_distance == pytest.approx(np.mean(d), rel=1e-15)
    assert serial.sd_distance == pytest.approx(np.std(d, ddof=1), rel=1e-12)
    assert math.isnan(serial.pi)


def test_grouped_pi_in_unit_interval():
    rep = harness.run_experiment(parse_config(GROUPED))
    assert 0.0 <= rep.pi <= 1.0
    assert rep.pi == sum(bool(r.correct) for r in rep.replications) / 2


def test_summary_files(tmp_path):
    rep = harness.run_experiment(parse_config(BASIC))
    rep.write_summary(tmp_path / "s.csv")
    rep.write_replications(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["setting", "mean_d2", "sd_d2", "pi", "runtime", "truth"]
    assert rows[1][0] == "mica-ex1/t3/p=3/n=120/mica/h0=1"
    assert float(rows[1][1]) == rep.mean_distance
    assert rows[1][3] == "" and rows[1][4] == "" and rows[1][5] == "whitened-adjusted"
    reps = list(csv.reader(open(tmp_path / "r.csv")))
    assert reps[0][:3] == ["replication", "seed", "distance"]
    assert [r[1] for r in reps[1:]] == ["40", "41", "42"]
    rep.write_summary(tmp_path / "t.csv", timing=True)
    assert float(list(csv.reader(open(tmp_path / "t.csv")))[1][4]) > 0.0


def test_too_many_failures():
    cfg = ExperimentConfig("mica-ex1", 3, 100, replications=5)
    ok = ReplicationResult(0, 0, distance=0.1)
    bad = [ReplicationResult(i, i, error="SingularCovariance: x") for i in range(1, 3)]
    with pytest.raises(TooManyFailures):
        harness.summarize(cfg, [ok] + bad)
    with pytest.warns(UserWarning, match="1 replication"):
        rep = harness.summarize(cfg, [ok, ok, ok, ok, bad[0]])
    assert rep.failed == 1 and rep.mean_distance == pytest.approx(0.1)
