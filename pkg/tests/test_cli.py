import json

import numpy as np
import pytest

from yardsale.cli import main
from yardsale.io import read_table, read_wealths, write_table


def write_config(path, text):
    path.write_text(text)
    return str(path)


YS = """
[simulation]
model = pure_ys
n_agents = 100
max_steps = 1e6
seed = 7
ensemble_size = 3
"""


def test_simulate_pure_ys_condenses(tmp_path):
    cfg = write_config(tmp_path / "ys.ini", YS)
    assert main(["--config", cfg, "--out-dir", str(tmp_path / "out"), "simulate"]) == 0
    header, rows = read_table(tmp_path / "out" / "pooled_wealths.tsv")
    assert header == ["replica", "agent", "wealth"]
    w = rows[:, 2].reshape(3, 100)
    assert np.all(w.max(axis=1) / 100.0 > 0.99)
    header, rows = read_table(tmp_path / "out" / "richest_series.tsv")
    assert header == ["step", "mean_max_wealth", "stderr"]
    assert rows[-1, 0] == 10**6


def test_manifest_echoes_defaults(tmp_path):
    cfg = write_config(tmp_path / "c.ini", """
[simulation]
model = split_wealth
n_agents = 10
max_steps = 1000
""")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    sim = m["config"]["simulation"]
    assert sim["seed"] == 0 and sim["ensemble_size"] == 1 and sim["total_money"] == 10.0
    assert sim["schedule"] == "geometric" and sim["growth"] == 1.05
    assert m["config"]["split_wealth"] == {"lambdas": "uniform", "split_mode": "coupled"}
    assert set(m) >= {"config", "artifact_version", "timestamp", "output_paths"}


def test_same_seed_gives_identical_files_and_manifest_rebuilds(tmp_path):
    cfg = write_config(tmp_path / "c.ini", """
[simulation]
model = probabilistic_choice
n_agents = 20
max_steps = 20000
ensemble_size = 4

[probabilistic_choice]
disagreement = skip
""")
    a, b, c = (tmp_path / d for d in "abc")
    assert main(["--seed", "5", "--config", cfg, "--out-dir", str(a), "simulate"]) == 0
    assert main(["simulate", "--seed", "5", "--config", cfg, "--out-dir", str(b), "--threads", "2"]) == 0
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out-dir", str(c)]) == 0
    for name in ("pooled_wealths.tsv", "richest_series.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()
    d = tmp_path / "d"
    assert main(["simulate", "--seed", "6", "--config", cfg, "--out-dir", str(d)]) == 0
    assert (a / "pooled_wealths.tsv").read_bytes() != (d / "pooled_wealths.tsv").read_bytes()


def test_tables_round_trip_floats(tmp_path):
    vals = np.random.default_rng(0).random(100) ** 7
    write_table(tmp_path / "t.tsv", ["wealth"], [vals])
    assert np.array_equal(read_wealths(tmp_path / "t.tsv"), vals)


def test_missing_key_is_named(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", "[simulation]\nmodel = pure_tf\nmax_steps = 10\n")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "n_agents" in capsys.readouterr().err


@pytest.mark.parametrize("body, key", [
    ("model = split_wealth\nn_agents = 10\nmax_steps = 10\n[split_wealth]\nlambdas = 1.5\n", "split_wealth"),
    ("model = nope\nn_agents = 10\nmax_steps = 10\n", "model"),
    ("model = pure_ys\nn_agents = ten\nmax_steps = 10\n", "n_agents"),
    ("model = pure_ys\nn_agents = 1\nmax_steps = 10\n", "n_agents"),
    ("model = pure_ys\nn_agents = 4\nmax_steps = 10\ngrowth = 0.5\n", "growth"),
])
def test_invalid_config_exits_one(tmp_path, capsys, body, key):
    cfg = write_config(tmp_path / "c.ini", "[simulation]\n" + body)
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert key in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 1


def test_fit_pareto_file(tmp_path, capsys):
    u = 1.0 - np.random.default_rng(1).random(10**6)
    write_table(tmp_path / "p.tsv", ["wealth"], [1.0 / u])
    out = tmp_path / "fit.json"
    assert main(["fit", str(tmp_path / "p.tsv"), "--x-min", "1", "--min-count", "10", "--output", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["fits"][0]["params"]["nu"] == pytest.approx(2.0, abs=0.05)
    assert "power_law" in capsys.readouterr().out


def test_fit_compare_prints_both_rows(tmp_path, capsys):
    u = 1.0 - np.random.default_rng(2).random(10**5)
    (tmp_path / "p.txt").write_text("\n".join(repr(float(v)) for v in u ** -0.5))
    assert main(["fit", str(tmp_path / "p.txt"), "--compare", "--x-min", "1", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "power_law" in out and "lognormal" in out
    rec = json.loads((tmp_path / "fit_report.json").read_text())
    assert [f["form"] for f in rec["fits"]] == ["power_law", "lognormal"]


def test_fit_diagnostics_are_distinct(tmp_path, capsys):
    (tmp_path / "one.txt").write_text("1.0\n")
    (tmp_path / "empty.txt").write_text("")
    assert main(["fit", str(tmp_path / "one.txt"), "--out-dir", str(tmp_path)]) == 2
    bins = capsys.readouterr().err
    assert main(["fit", str(tmp_path / "empty.txt")]) == 1
    empty = capsys.readouterr().err
    assert main(["fit", str(tmp_path / "nope.txt")]) == 1
    missing = capsys.readouterr().err
    assert "insufficient bins" in bins and "empty" in empty and "cannot read" in missing


def test_zipf_examples(tmp_path):
    (tmp_path / "s.txt").write_text("1\n3\n2\n")
    assert main(["zipf", str(tmp_path / "s.txt"), "--output", str(tmp_path / "z.tsv")]) == 0
    assert (tmp_path / "z.tsv").read_text() == "rank\twealth\n1\t3.0\n2\t2.0\n3\t1.0\n"
    (tmp_path / "one.txt").write_text("4.5\n")
    assert main(["zipf", str(tmp_path / "one.txt"), "--output", str(tmp_path / "z1.tsv")]) == 0
    assert (tmp_path / "z1.tsv").read_text() == "rank\twealth\n1\t4.5\n"
    (tmp_path / "e.txt").write_text("")
    assert main(["zipf", str(tmp_path / "e.txt")]) == 1


def test_zipf_reads_pooled_file(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[simulation]\nmodel = pure_tf\nn_agents = 5\nmax_steps = 100\n")
    assert main(["simulate", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    assert main(["zipf", str(tmp_path / "pooled_wealths.tsv"), "--out-dir", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "zipf_ranks.tsv")
    assert rows.shape == (5, 2) and np.all(np.diff(rows[:, 1]) <= 0)
    assert rows[:, 1].sum() == pytest.approx(5.0, rel=1e-12)


def test_sweep_two_n_values_is_usage_error(capsys):
    assert main(["sweep", "--model", "pure_tf", "--n-list", "10", "20", "--max-steps", "100"]) == 1
    assert "n_list" in capsys.readouterr().err


def test_sweep_writes_table_and_report(tmp_path):
    cfg = write_config(tmp_path / "c.ini", """
[simulation]
model = mixed_agents
max_steps = 100000
ensemble_size = 20
seed = 3

[mixed_agents]
tf_agents = 0

[sweep]
n_list = 10, 20, 40
max_steps = 10:30000, 20:100000, 40:300000
""")
    assert main(["sweep", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    header, rows = read_table(tmp_path / "tc_table.tsv")
    assert header == ["n_agents", "max_steps", "t_c", "saturated_value"]
    assert list(rows[:, 0]) == [10, 20, 40] and list(rows[:, 1]) == [30000, 100000, 300000]
    rep = json.loads((tmp_path / "sweep_report.json").read_text())
    assert rep["fit"]["b"] > 0 and all(r["saturated"] for r in rep["rows"])
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["config"]["sweep"]["n_list"] == "10, 20, 40"


def test_sweep_reports_unsaturated_and_exits_two(tmp_path, capsys):
    # t_c(80) is near 1e5, far beyond a 3000-step budget
    rc = main(["sweep", "--model", "mixed_agents", "--n-list", "20", "40", "80", "--max-steps", "300000",
               "--steps", "80:3000", "--ensemble-size", "10", "--out-dir", str(tmp_path)])
    assert rc == 2
    err = capsys.readouterr().err
    assert "N=80" in err
    rep = json.loads((tmp_path / "sweep_report.json").read_text())
    assert [r["saturated"] for r in rep["rows"]] == [True, True, False]
