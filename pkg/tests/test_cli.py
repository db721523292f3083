import json
import subprocess
import sys

import numpy as np
import pytest

from chemoeda import default_instance
from chemoeda.cli import EXIT_EXPERIMENT, EXIT_INVARIANT, EXIT_PARSE, EXIT_USAGE, main
from chemoeda.harness import ExperimentSummary, RunRow, read_results, write_results
from chemoeda.instance_io import save_instance


def tiny_instance(tmp_path, **changes):
    path = tmp_path / "tiny.inst"
    save_instance(default_instance(s=2, d=2).replace(**changes), path)
    return path


def synthetic(path, label, mean, std, n=30, protocol="efficiency"):
    z = np.random.default_rng(0).normal(size=n)
    z = (z - z.mean()) / z.std(ddof=1)
    rows = [RunRow(i, i, float(mean + std * v), False, 0) for i, v in enumerate(z)]
    write_results(ExperimentSummary(label, protocol, rows), path)
    return str(path)


# -------------------------------------------------------------- validate


def test_validate_default(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "valid: yes" in out and "crosses n_max" in out


def test_validate_names_violated_invariant(tmp_path, capsys):
    path = tmp_path / "bad.inst"
    path.write_text("n0 = 2e12\n")
    assert main(["validate", str(path)]) == EXIT_INVARIANT
    assert "n0 < theta" in capsys.readouterr().err


def test_validate_unknown_key_is_parse_error(tmp_path, capsys):
    path = tmp_path / "bad.inst"
    path.write_text("s = 2\nfoo = 1\n")
    assert main(["validate", str(path)]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert "foo" in err and "line 2" in err


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "none.inst")]) == EXIT_PARSE


def test_validate_flag_override(capsys):
    assert main(["validate", "--set", "n_max=2e12"]) == 0
    assert "never crosses" in capsys.readouterr().out


# ------------------------------------------------------------------- run


def test_run_writes_trace_and_record(tmp_path):
    args = ["run", "umda", "--pop", "112", "--select", "tournament:6", "--budget", "3000",
            "--seed", "3", "--out", str(tmp_path)]
    assert main(args) == 0
    trace = (tmp_path / "run-umda-seed3.trace.csv").read_text().splitlines()
    assert trace[0].startswith("# tool = chemoeda")
    assert any(line.startswith("# instance_hash") for line in trace)
    rows = [line.split(",") for line in trace if line[0].isdigit()]
    best = [float(r[2]) for r in rows]
    assert best == sorted(best)
    record = json.loads((tmp_path / "run-umda-seed3.json").read_text())
    assert record["total_evaluations"] == 3000
    assert record["config"]["population_size"] == 112
    assert len(record["best_x"]) == 400


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["run", "ga", "--pop", "20", "--budget", "400", "--seed", "1", "--instance", "default"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b), "--jobs", "2"]) == 0
    for name in ("run-ga-seed1.trace.csv", "run-ga-seed1.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_hboa_reports_first_feasible(tmp_path, capsys):
    inst = tiny_instance(tmp_path)
    args = ["run", "hboa", "--instance", str(inst), "--pop", "40", "--select", "truncation:4",
            "--stop", "feasible", "--budget", "5000", "--out", str(tmp_path)]
    assert main(args) == 0
    assert "first feasible" in capsys.readouterr().out


def test_run_uses_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CHEMOEDA_OUT", str(tmp_path / "env"))
    assert main(["run", "pbil", "--pop", "10", "--budget", "20"]) == 0
    assert (tmp_path / "env" / "run-pbil-seed0.json").exists()


def test_run_param_and_config_errors(tmp_path):
    out = ["--out", str(tmp_path)]
    assert main(["run", "pbil", "--pop", "10", "--budget", "20", "--param", "learning_rate=0.5"] + out) == 0
    assert main(["run", "pbil", "--param", "bogus=1"] + out) == EXIT_EXPERIMENT
    assert main(["run", "pbil", "--param", "novalue"] + out) == EXIT_USAGE
    assert main(["run", "umda", "--select", "roulette"] + out) == EXIT_EXPERIMENT


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["run", "sa"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


# ------------------------------------------------------------ experiment


def write_spec(tmp_path, **fields):
    spec = {"optimizer": "umda", "config": {"population_size": 20}, "protocol": "efficiency",
            "runs": 3, "cap": 2000, "label": "u"}
    spec.update(fields)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return str(path)


def test_experiment_efficiency_rows(tmp_path):
    inst = tiny_instance(tmp_path, n_max=2e12, c_cum=np.full(2, 30.0), c_seff=np.full(4, 15.0),
                         c_max=np.full(2, 15.0))
    spec = write_spec(tmp_path, instance=inst.name)
    assert main(["experiment", spec, "--out", str(tmp_path / "o")]) == 0
    s = read_results(tmp_path / "o" / "u.csv")
    assert len(s.rows) == 3 and s.protocol == "efficiency"
    assert (tmp_path / "o" / "u.meta.json").exists()
    assert "# summary" in (tmp_path / "o" / "u.csv").read_text()


def test_experiment_quality_uses_cap_and_flags(tmp_path):
    spec = write_spec(tmp_path, protocol="quality", cap=500)
    args = ["experiment", spec, "--instance", str(tiny_instance(tmp_path)), "--runs", "2",
            "--seed", "10", "--label", "q", "--out", str(tmp_path)]
    assert main(args) == 0
    s = read_results(tmp_path / "q.csv")
    assert [r.total_evaluations for r in s.rows] == [500, 500]
    assert [r.seed for r in s.rows] == [10, 11]


def test_experiment_rejects_single_run(tmp_path):
    assert main(["experiment", write_spec(tmp_path, runs=1), "--out", str(tmp_path)]) == EXIT_EXPERIMENT


def test_experiment_bad_spec_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["experiment", str(bad)]) == EXIT_PARSE
    bad.write_text(json.dumps({"optimizer": "umda", "colour": "red"}))
    assert main(["experiment", str(bad)]) == EXIT_PARSE


def test_experiment_byte_identical(tmp_path):
    spec = write_spec(tmp_path, protocol="quality", cap=300, instance="tiny.inst")
    tiny_instance(tmp_path)
    for d in ("a", "b"):
        assert main(["experiment", spec, "--out", str(tmp_path / d)]) == 0
    for name in ("u.csv", "u.meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ------------------------------------------------------- compare/plotdata


def test_compare_reference_rows(tmp_path, capsys):
    a = synthetic(tmp_path / "umda.csv", "UMDA", 2695.5, 490.3)
    b = synthetic(tmp_path / "hboa.csv", "hBOA", 7917.6, 843.0)
    assert main(["compare", a, b]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "a,b,diff,se,t,p,df"
    assert len(lines) == 2
    se = float(lines[1].split(",")[3])
    assert se == pytest.approx(178.049, abs=0.01)


def test_compare_identical_and_three_way(tmp_path, capsys):
    a = synthetic(tmp_path / "a.csv", "a", 10, 2)
    b = synthetic(tmp_path / "b.csv", "b", 12, 2)
    assert main(["compare", a, a]) == 0
    row = capsys.readouterr().out.strip().splitlines()[1].split(",")
    assert float(row[4]) == 0 and float(row[5]) == 1
    assert main(["compare", a, b, a, "--out", str(tmp_path / "cmp")]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 4
    assert (tmp_path / "cmp" / "compare.csv").read_text().startswith("# tool = chemoeda")


def test_compare_errors(tmp_path):
    a = synthetic(tmp_path / "a.csv", "a", 10, 2)
    q = synthetic(tmp_path / "q.csv", "q", 0.4, 0.1, protocol="quality")
    assert main(["compare", a, q]) == EXIT_EXPERIMENT
    assert main(["compare", a]) == EXIT_USAGE
    junk = tmp_path / "junk.csv"
    junk.write_text("hello\n")
    assert main(["compare", a, str(junk)]) == EXIT_PARSE


def test_plotdata(tmp_path, capsys):
    table = [("UMDA", 2695.5, 490.3), ("hBOA", 7917.6, 843.0), ("GA", 16208.1, 12045.8),
             ("PBIL", 4534.0, 1000.0), ("Other", 3000.0, 300.0)]
    files = [synthetic(tmp_path / f"{l}.csv", l, m, s) for l, m, s in table]
    assert main(["plotdata", files[0]]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2
    assert main(["plotdata", *files]) == 0
    lines = capsys.readouterr().out.strip().splitlines()[1:]
    assert len(lines) == 5
    for line, (label, mean, std) in zip(lines, table):
        l, m, s = line.split(",")
        assert l == label
        assert float(m) == pytest.approx(mean) and float(s) == pytest.approx(std)
    assert main(["plotdata"]) == EXIT_USAGE


# --------------------------------------------------------------- linkage


def test_linkage_tiny_instance(tmp_path, capsys):
    inst = tiny_instance(tmp_path)
    assert main(["linkage", "--instance", str(inst), "--seed", "4", "--out", str(tmp_path)]) == 0
    assert "density" in capsys.readouterr().out
    text = (tmp_path / "linkage-seed4.txt").read_text()
    assert "# n_bits = 16" in text and "# instance_hash" in text


def test_linkage_onemax_control(tmp_path, capsys):
    assert main(["linkage", "--onemax", "30", "--out", str(tmp_path)]) == 0
    assert "pairs 0 of 435" in capsys.readouterr().out


def test_linkage_byte_identical(tmp_path):
    inst = str(tiny_instance(tmp_path))
    for d in ("a", "b"):
        assert main(["linkage", "--instance", inst, "--backgrounds", "2", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "linkage-seed0.txt").read_bytes() == (tmp_path / "b" / "linkage-seed0.txt").read_bytes()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chemoeda.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "chemoeda" in proc.stdout


# ---------------------------------------------------------------- bisect


def test_bisect_easy_instance_returns_lower_bound(tmp_path, capsys):
    inst = tiny_instance(tmp_path, n_max=2e12, c_cum=np.full(2, 30.0), c_seff=np.full(4, 15.0),
                         c_max=np.full(2, 15.0))
    args = ["bisect", "umda", "--instance", str(inst), "--lo", "8", "--hi", "16", "--trials", "3",
            "--out", str(tmp_path)]
    assert main(args) == 0
    assert "population 8" in capsys.readouterr().out
    assert (tmp_path / "bisect-umda-seed0.csv").read_text().splitlines()[-1].startswith("umda,8,3,")


def test_bisect_is_deterministic(tmp_path):
    inst = str(tiny_instance(tmp_path))
    base = ["bisect", "ga", "--instance", inst, "--lo", "4", "--hi", "8", "--trials", "4", "--budget", "2000"]
    for d in ("a", "b"):
        assert main(base + ["--out", str(tmp_path / d)]) == 0
    name = "bisect-ga-seed0.csv"
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["bisect", "ga", "--lo", "8", "--hi", "8"]) == EXIT_EXPERIMENT
